#include <string>
#include <vector>

#include "mvlstm/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv + 1, argv + argc);
    return mvlstm::run_cli(args);
}
