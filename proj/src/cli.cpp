#include "mvlstm/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "mvlstm/autodiff.hpp"
#include "mvlstm/data.hpp"
#include "mvlstm/model.hpp"
#include "mvlstm/probe.hpp"
#include "mvlstm/serialize.hpp"

namespace mvlstm {

namespace {

using nlohmann::json;

std::string format_rate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

TauSpec parse_tau(const std::string& text) {
    TauSpec spec;
    if (text == "first") {
        spec.policy = TauPolicy::first_frame;
    } else if (text == "random") {
        spec.policy = TauPolicy::random_per_sequence;
    } else {
        spec.policy = TauPolicy::fixed;
        std::size_t consumed = 0;
        const long value = std::stol(text, &consumed);
        if (consumed != text.size() || value < 0)
            throw CLI::ValidationError("--tau", "expected first, random or a non-negative index");
        spec.fixed_index = static_cast<std::size_t>(value);
    }
    return spec;
}

std::vector<ModeRequest> parse_mode_spec(const std::string& text) {
    std::vector<ModeRequest> requests;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const auto colon = item.find(':');
        const std::string kind = item.substr(0, colon);
        std::size_t count = 1;
        if (colon != std::string::npos) count = std::stoul(item.substr(colon + 1));
        ModeRequest req;
        if (kind == "identity") {
            req.identity = true;
        } else if (kind == "additive") {
            req.kind = ModeKind::additive_bias;
        } else if (kind == "gain") {
            req.kind = ModeKind::channel_gain;
        } else if (kind == "rotation") {
            req.kind = ModeKind::linear_transform;
        } else {
            throw CLI::ValidationError(
                "--modes", "unknown mode kind '" + kind +
                               "' (expected identity, additive, gain or rotation)");
        }
        for (std::size_t n = 0; n < count; ++n) requests.push_back(req);
    }
    if (requests.empty())
        throw CLI::ValidationError("--modes", "mode list resolves to nothing");
    return requests;
}

std::vector<std::uint32_t> parse_id_list(const std::string& text) {
    std::vector<std::uint32_t> ids;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        ids.push_back(static_cast<std::uint32_t>(std::stoul(item)));
    }
    return ids;
}

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command,
                        std::uint64_t seed, const json& config,
                        const std::vector<std::string>& outputs) {
    json manifest;
    manifest["version"] = kCliVersion;
    manifest["command"] = command;
    manifest["seed"] = seed;
    manifest["config"] = config;
    manifest["outputs"] = outputs;
    atomic_write_file(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

const ModeSpec* find_mode(const DatasetManifest& manifest, std::uint32_t id) {
    for (const ModeSpec& m : manifest.config.modes)
        if (m.mode_id == id) return &m;
    return nullptr;
}

// ---------------------------------------------------------------- gen-data

struct GenDataOptions {
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t input_dim = 16;
    std::size_t num_frames = 24;
    std::size_t num_classes = 6;
    std::size_t reps = 40;
    double noise = 0.05;
    double appearance = 0.5;
    double depth = 0.8;
    double jitter = 1.0;
    std::size_t ramp = 12;
    std::string modes = "identity:1,additive:1,gain:1,rotation:1";
};

int cmd_gen_data(const GenDataOptions& opt) {
    GeneratorConfig cfg;
    cfg.input_dim = opt.input_dim;
    cfg.num_frames = opt.num_frames;
    cfg.num_classes = opt.num_classes;
    cfg.samples_per_class_mode = opt.reps;
    cfg.noise_sigma = opt.noise;
    cfg.appearance_sigma = opt.appearance;
    cfg.modulation_depth = opt.depth;
    cfg.condition_jitter = opt.jitter;
    cfg.neutral_ramp_frames = opt.ramp;
    const auto requests = parse_mode_spec(opt.modes);
    cfg.modes = generate_modes(requests, cfg.input_dim, opt.seed);

    const Dataset ds = generate_dataset(cfg, opt.seed);
    const std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir);
    save_dataset(ds, out_dir / "dataset");

    json config;
    config["input_dim"] = cfg.input_dim;
    config["num_frames"] = cfg.num_frames;
    config["num_classes"] = cfg.num_classes;
    config["samples_per_class_mode"] = cfg.samples_per_class_mode;
    config["noise_sigma"] = cfg.noise_sigma;
    config["appearance_sigma"] = cfg.appearance_sigma;
    config["modulation_depth"] = cfg.modulation_depth;
    config["condition_jitter"] = cfg.condition_jitter;
    config["neutral_ramp_frames"] = cfg.neutral_ramp_frames;
    config["modes"] = opt.modes;
    write_run_manifest(out_dir, "gen-data", opt.seed, config,
                       {"dataset.manifest", "dataset.frames", "run_manifest.json"});

    std::cout << "wrote " << ds.samples.size() << " samples to "
              << (out_dir / "dataset").string() << ".{manifest,frames}\n";
    std::cout << "class";
    for (const ModeSpec& m : cfg.modes) std::cout << "," << m.name;
    std::cout << "\n";
    for (std::size_t k = 0; k < cfg.num_classes; ++k) {
        std::cout << k;
        for (std::size_t m = 0; m < cfg.modes.size(); ++m)
            std::cout << "," << ds.manifest.counts[k][m];
        std::cout << "\n";
    }
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainOptions {
    std::string dataset_stem;
    std::string out_dir;
    std::string variant = "modevar_crosscell";
    std::uint64_t seed = 0;
    std::size_t epochs = 50;
    double lr = 1e-4;
    std::size_t batch = 8;
    std::size_t hidden = 32;
    std::string optimizer = "adam";
    std::string tau = "first";
    double grad_clip = 5.0;
    std::string seen_modes = "0";
    std::size_t folds = 10;
    std::size_t fold = 0;
    bool literal_eq2 = false;
    bool diagonal_peephole = false;
    bool untied_cross = false;
};

json train_config_json(const TrainOptions& opt) {
    json j;
    j["dataset"] = opt.dataset_stem;
    j["variant"] = opt.variant;
    j["epochs"] = opt.epochs;
    j["learning_rate"] = opt.lr;
    j["batch_size"] = opt.batch;
    j["hidden_dim"] = opt.hidden;
    j["optimizer"] = opt.optimizer;
    j["tau"] = opt.tau;
    j["grad_clip"] = opt.grad_clip;
    j["seen_modes"] = opt.seen_modes;
    j["folds"] = opt.folds;
    j["fold"] = opt.fold;
    j["literal_eq2"] = opt.literal_eq2;
    j["diagonal_peephole"] = opt.diagonal_peephole;
    j["untied_cross"] = opt.untied_cross;
    return j;
}

ModeSplit split_from_options(const Dataset& ds, const std::string& seen_modes,
                             std::size_t folds, std::size_t fold) {
    const std::vector<std::uint32_t> seen = parse_id_list(seen_modes);
    std::vector<std::uint32_t> unseen;
    for (const ModeSpec& m : ds.manifest.config.modes)
        if (std::find(seen.begin(), seen.end(), m.mode_id) == seen.end())
            unseen.push_back(m.mode_id);
    return split_by_mode(ds.samples, seen, unseen, SplitConfig{folds, fold});
}

int cmd_train(const TrainOptions& opt) {
    const Dataset ds = load_dataset(opt.dataset_stem);
    const ModeSplit split = split_from_options(ds, opt.seen_modes, opt.folds, opt.fold);

    TrainConfig cfg;
    cfg.learning_rate = opt.lr;
    cfg.epochs = opt.epochs;
    cfg.batch_size = opt.batch;
    cfg.optimizer = optimizer_from_string(opt.optimizer);
    cfg.seed = opt.seed;
    cfg.grad_clip = opt.grad_clip;
    cfg.tau = parse_tau(opt.tau);

    CellOptions cell_opts;
    cell_opts.literal_eq2 = opt.literal_eq2;
    cell_opts.diagonal_peephole = opt.diagonal_peephole;
    cell_opts.untied_cross = opt.untied_cross;

    std::cout << "training " << opt.variant << " on " << split.train.size()
              << " seen-mode samples\n";
    std::cout << "epoch,mean_loss,train_accuracy,wall_time_ms\n";
    const TrainResult result = train(split.train, variant_from_string(opt.variant), opt.hidden,
                                     cfg, cell_opts, ds.manifest.config.num_classes);
    for (const EpochMetrics& m : result.history)
        std::cout << m.epoch << "," << format_rate(m.mean_loss) << ","
                  << format_rate(m.train_accuracy) << "," << format_rate(m.wall_time_ms) << "\n";

    const std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir);

    // wall time is excluded from the persisted metrics so reruns are
    // byte-identical; the live rows above carry it
    std::ostringstream metrics;
    metrics << "epoch,mean_loss,train_accuracy\n";
    for (const EpochMetrics& m : result.history)
        metrics << m.epoch << "," << format_rate(m.mean_loss) << ","
                << format_rate(m.train_accuracy) << "\n";
    atomic_write_file(out_dir / "metrics.csv", metrics.str());

    ModelArchive archive;
    archive.params = result.params;
    archive.metadata = train_config_json(opt);
    archive.metadata["seed"] = opt.seed;
    archive.metadata["dataset_master_seed"] = ds.manifest.master_seed;
    archive.metadata["num_classes"] = ds.manifest.config.num_classes;
    archive.metadata["version"] = kCliVersion;
    save_model(archive, out_dir / "model.json");

    write_run_manifest(out_dir, "train", opt.seed, train_config_json(opt),
                       {"model.json", "metrics.csv", "run_manifest.json"});
    std::cout << "final train accuracy "
              << format_rate(result.history.back().train_accuracy) << "\n";
    std::cout << "wrote " << (out_dir / "model.json").string() << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
    std::string dataset_stem;
    std::string model_path;
    std::string compare_path;
    std::string out_dir;
    std::string split = "test";
};

struct ModelEval {
    std::string label;
    double seen_rate = 0.0;
    double unseen_rate = 0.0;
    double overall = 0.0;
    double gap = 0.0;
    std::string csv;
};

ModelEval evaluate_archive(const ModelArchive& archive, const Dataset& ds,
                           const std::string& split_name, const std::string& label) {
    const json& meta = archive.metadata;
    const TauSpec tau = parse_tau(meta.at("tau").get<std::string>());
    const std::uint64_t seed = meta.at("seed").get<std::uint64_t>();
    const ModeSplit split =
        split_from_options(ds, meta.at("seen_modes").get<std::string>(),
                           meta.at("folds").get<std::size_t>(),
                           meta.at("fold").get<std::size_t>());
    const std::set<std::uint32_t> seen_ids = [&] {
        std::set<std::uint32_t> s;
        for (std::uint32_t id : parse_id_list(meta.at("seen_modes").get<std::string>()))
            s.insert(id);
        return s;
    }();

    // samples in scope, grouped per mode
    std::map<std::uint32_t, std::vector<SequenceSample>> by_mode;
    auto add_all = [&](const std::vector<SequenceSample>& xs) {
        for (const SequenceSample& s : xs) by_mode[s.mode_id].push_back(s);
    };
    if (split_name == "train") {
        add_all(split.train);
    } else if (split_name == "test") {
        add_all(split.seen_test);
        for (const auto& [mode, xs] : split.unseen_tests) add_all(xs);
    } else {  // all
        for (const SequenceSample& s : ds.samples) by_mode[s.mode_id].push_back(s);
    }

    ModelEval ev;
    ev.label = label;
    std::ostringstream csv;
    csv << "row,mode_id,mode_name,count,correct,rate\n";
    std::size_t seen_n = 0, seen_c = 0, unseen_n = 0, unseen_c = 0;
    for (const auto& [mode_id, samples] : by_mode) {
        if (samples.empty()) continue;
        const EvalResult r = evaluate(archive.params, samples, tau, seed);
        const ModeSpec* spec = find_mode(ds.manifest, mode_id);
        csv << "mode," << mode_id << "," << (spec ? spec->name : "?") << "," << r.total << ","
            << r.correct << "," << format_rate(r.recognition_rate) << "\n";
        if (seen_ids.count(mode_id)) {
            seen_n += r.total;
            seen_c += r.correct;
        } else {
            unseen_n += r.total;
            unseen_c += r.correct;
        }
    }
    ev.seen_rate = seen_n ? static_cast<double>(seen_c) / static_cast<double>(seen_n) : 0.0;
    ev.unseen_rate =
        unseen_n ? static_cast<double>(unseen_c) / static_cast<double>(unseen_n) : 0.0;
    const std::size_t total_n = seen_n + unseen_n;
    const std::size_t total_c = seen_c + unseen_c;
    ev.overall = total_n ? static_cast<double>(total_c) / static_cast<double>(total_n) : 0.0;
    ev.gap = ev.seen_rate - ev.unseen_rate;
    csv << "summary,,seen," << seen_n << "," << seen_c << "," << format_rate(ev.seen_rate)
        << "\n";
    csv << "summary,,unseen," << unseen_n << "," << unseen_c << ","
        << format_rate(ev.unseen_rate) << "\n";
    csv << "summary,,overall," << total_n << "," << total_c << "," << format_rate(ev.overall)
        << "\n";
    csv << "summary,,seen_unseen_gap,,," << format_rate(ev.gap) << "\n";
    ev.csv = csv.str();
    return ev;
}

int cmd_eval(const EvalOptions& opt) {
    if (opt.split != "train" && opt.split != "test" && opt.split != "all")
        throw CLI::ValidationError("--split", "expected train, test or all");
    const Dataset ds = load_dataset(opt.dataset_stem);
    const ModelArchive archive = load_model(opt.model_path);

    const ModelEval ev = evaluate_archive(archive, ds, opt.split, opt.model_path);
    std::cout << "model: " << opt.model_path << " ("
              << to_string(variant_of(archive.params.cell)) << ", split " << opt.split << ")\n";
    std::cout << ev.csv;

    const std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir);
    atomic_write_file(out_dir / "eval.csv", ev.csv);
    std::vector<std::string> outputs{"eval.csv", "run_manifest.json"};

    if (!opt.compare_path.empty()) {
        const ModelArchive other = load_model(opt.compare_path);
        const ModelEval ev2 = evaluate_archive(other, ds, opt.split, opt.compare_path);
        atomic_write_file(out_dir / "eval_compare.csv", ev2.csv);
        outputs.insert(outputs.begin() + 1, "eval_compare.csv");
        std::cout << "compare: " << opt.compare_path << " ("
                  << to_string(variant_of(other.params.cell)) << ")\n";
        std::cout << ev2.csv;
        std::cout << "gap(" << to_string(variant_of(archive.params.cell))
                  << ")=" << format_rate(ev.gap) << " vs gap("
                  << to_string(variant_of(other.params.cell)) << ")=" << format_rate(ev2.gap)
                  << " difference=" << format_rate(ev.gap - ev2.gap) << "\n";
    }

    json config;
    config["dataset"] = opt.dataset_stem;
    config["model"] = opt.model_path;
    config["compare"] = opt.compare_path;
    config["split"] = opt.split;
    write_run_manifest(out_dir, "eval", archive.metadata.at("seed").get<std::uint64_t>(),
                       config, outputs);
    return 0;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckOptions {
    std::string out_dir;
    std::size_t seeds = 20;
    double tolerance = 1e-5;
};

int cmd_gradcheck(const GradcheckOptions& opt) {
    // shapes rotate through the desk-scale envelope
    const struct {
        std::size_t dx, dh, steps;
    } shapes[] = {{3, 4, 5}, {2, 3, 4}, {8, 8, 6}, {1, 2, 3}};

    bool all_pass = true;
    double worst = 0.0;
    std::string worst_param = "-";
    std::string worst_variant;
    json out_doc;
    out_doc["tolerance"] = opt.tolerance;
    out_doc["seeds"] = opt.seeds;

    for (Variant variant : {Variant::lstm, Variant::modevar, Variant::modevar_crosscell}) {
        std::map<std::string, double> per_param;
        bool variant_pass = true;
        for (std::size_t seed = 0; seed < opt.seeds; ++seed) {
            const auto& shape = shapes[seed % 4];
            const GradCheckReport r =
                grad_check(variant, shape.dx, shape.dh, shape.steps, seed, opt.tolerance);
            variant_pass = variant_pass && r.pass;
            for (const auto& [name, err] : r.per_tensor_max) {
                auto [it, inserted] = per_param.emplace(name, err);
                if (!inserted) it->second = std::max(it->second, err);
                if (err > worst) {
                    worst = err;
                    worst_param = name;
                    worst_variant = to_string(variant);
                }
            }
        }
        all_pass = all_pass && variant_pass;

        std::cout << "variant " << to_string(variant) << " ("
                  << (variant_pass ? "pass" : "FAIL") << ", " << opt.seeds
                  << " seeds, tolerance " << format_rate(opt.tolerance) << ")\n";
        std::cout << std::left << std::setw(20) << "  parameter" << std::setw(14)
                  << "max_rel_err" << "status\n";
        json variant_doc;
        for (const auto& [name, err] : per_param) {
            std::cout << "  " << std::left << std::setw(18) << name << std::setw(14)
                      << format_rate(err) << (err <= opt.tolerance ? "ok" : "FAIL") << "\n";
            variant_doc[name] = err;
        }
        out_doc["variants"][std::string(to_string(variant))] = variant_doc;
    }
    out_doc["pass"] = all_pass;
    out_doc["worst"] = {{"parameter", worst_param},
                        {"variant", worst_variant},
                        {"max_rel_err", worst}};

    if (!opt.out_dir.empty()) {
        const std::filesystem::path out_dir(opt.out_dir);
        std::filesystem::create_directories(out_dir);
        atomic_write_file(out_dir / "gradcheck.json", out_doc.dump(2) + "\n");
        write_run_manifest(out_dir, "gradcheck", 0,
                           {{"seeds", opt.seeds}, {"tolerance", opt.tolerance}},
                           {"gradcheck.json", "run_manifest.json"});
    }

    if (!all_pass) {
        std::cout << "gradient check FAILED: worst parameter " << worst_param << " ("
                  << worst_variant << ") max relative error " << format_rate(worst)
                  << " above tolerance " << format_rate(opt.tolerance) << "\n";
        return 1;
    }
    std::cout << "gradient check passed: global max relative error " << format_rate(worst)
              << "\n";
    return 0;
}

// ------------------------------------------------------------------- probe

struct ProbeOptions {
    std::string dataset_stem;
    std::string model_path;
    std::string out_dir;
    std::string pair;          // same-class-diff-mode | same-class-same-mode
    long sample_index = -1;
    long sample2_index = -1;
    std::size_t n_static = 30;
    std::string tau = "first";
    std::size_t first_k = 15;
    double epsilon = 1e-4;
};

std::string sample_label(const Dataset& ds, std::size_t index) {
    const SequenceSample& s = ds.samples[index];
    const ModeSpec* mode = find_mode(ds.manifest, s.mode_id);
    std::ostringstream out;
    out << "sample " << index << " class " << s.label << " mode "
        << (mode ? mode->name : std::to_string(s.mode_id));
    return out.str();
}

std::vector<std::size_t> resolve_probe_samples(const Dataset& ds, const ProbeOptions& opt) {
    if (opt.sample_index >= 0) {
        if (static_cast<std::size_t>(opt.sample_index) >= ds.samples.size())
            throw std::runtime_error("probe: --sample index out of range");
        std::vector<std::size_t> picks{static_cast<std::size_t>(opt.sample_index)};
        if (opt.sample2_index >= 0) {
            if (static_cast<std::size_t>(opt.sample2_index) >= ds.samples.size())
                throw std::runtime_error("probe: --sample2 index out of range");
            picks.push_back(static_cast<std::size_t>(opt.sample2_index));
        }
        return picks;
    }
    if (opt.pair == "same-class-diff-mode") {
        // lowest (class, seed) group with two distinct modes, lowest mode ids
        std::map<std::pair<std::size_t, std::uint64_t>, std::map<std::uint32_t, std::size_t>>
            groups;
        for (std::size_t n = 0; n < ds.samples.size(); ++n)
            groups[{ds.samples[n].label, ds.samples[n].seed}].emplace(ds.samples[n].mode_id, n);
        for (const auto& [key, by_mode] : groups)
            if (by_mode.size() >= 2) {
                auto it = by_mode.begin();
                const std::size_t a = it->second;
                const std::size_t b = std::next(it)->second;
                return {a, b};
            }
        throw std::runtime_error("probe: no same-class different-mode pair in the dataset");
    }
    if (opt.pair == "same-class-same-mode") {
        std::map<std::pair<std::size_t, std::uint32_t>, std::vector<std::size_t>> groups;
        for (std::size_t n = 0; n < ds.samples.size(); ++n)
            groups[{ds.samples[n].label, ds.samples[n].mode_id}].push_back(n);
        for (const auto& [key, members] : groups)
            if (members.size() >= 2) return {members[0], members[1]};
        throw std::runtime_error("probe: no same-class same-mode pair in the dataset");
    }
    throw std::runtime_error(
        "probe: select samples with --pair same-class-diff-mode, --pair same-class-same-mode "
        "or --sample");
}

int cmd_probe(const ProbeOptions& opt) {
    const Dataset ds = load_dataset(opt.dataset_stem);
    const ModelArchive archive = load_model(opt.model_path);
    const TauSpec tau_spec = parse_tau(opt.tau);
    const std::uint64_t run_seed = archive.metadata.at("seed").get<std::uint64_t>();

    const std::vector<std::size_t> picks = resolve_probe_samples(ds, opt);

    std::vector<ProbeTrace> traces;
    std::vector<ProbeReport> reports;
    json summary;
    summary["n_static"] = opt.n_static;
    summary["epsilon"] = opt.epsilon;
    summary["first_k"] = opt.first_k;
    json jsamples = json::array();
    for (const std::size_t index : picks) {
        const SequenceSample& sample = ds.samples[index];
        const std::size_t tau =
            resolve_tau(tau_spec, sample.frames.size(), run_seed, sample.seed);
        const auto static_seq = make_static_sequence(sample, tau, opt.n_static);
        ProbeTrace trace = trace_features(archive.params.cell, static_seq);
        trace.sample_id = sample_label(ds, index);
        trace.tau = tau;
        const ProbeReport report = convergence_report(trace, opt.epsilon);

        json js;
        js["index"] = index;
        js["label"] = sample.label;
        js["mode_id"] = sample.mode_id;
        js["tau"] = tau;
        if (report.convergence_time)
            js["convergence_time"] = *report.convergence_time;
        else
            js["convergence_time"] = "none";
        jsamples.push_back(js);

        std::cout << trace.sample_id << ": tau=" << tau << " convergence_time=";
        if (report.convergence_time)
            std::cout << *report.convergence_time;
        else
            std::cout << "none";
        std::cout << " (epsilon " << format_rate(opt.epsilon) << ")\n";

        traces.push_back(std::move(trace));
        reports.push_back(report);
    }
    summary["samples"] = jsamples;

    const std::filesystem::path out_dir(opt.out_dir);
    std::filesystem::create_directories(out_dir);
    export_figure(traces, opt.first_k, out_dir / "probe");

    std::vector<std::string> outputs;
    if (traces.size() == 1) {
        outputs = {"probe.csv", "probe.svg"};
    } else {
        for (std::size_t n = 0; n < traces.size(); ++n) {
            outputs.push_back("probe_" + std::to_string(n) + ".csv");
            outputs.push_back("probe_" + std::to_string(n) + ".svg");
        }
    }

    if (reports.size() == 2) {
        const double divergence = pair_divergence(reports[0], reports[1]);
        summary["divergence"] = divergence;
        std::cout << "converged-value divergence: " << format_rate(divergence) << "\n";
    }
    atomic_write_file(out_dir / "divergence.json", summary.dump(2) + "\n");
    outputs.push_back("divergence.json");
    outputs.push_back("run_manifest.json");

    json config;
    config["dataset"] = opt.dataset_stem;
    config["model"] = opt.model_path;
    config["pair"] = opt.pair;
    config["n_static"] = opt.n_static;
    config["tau"] = opt.tau;
    config["first_k"] = opt.first_k;
    config["epsilon"] = opt.epsilon;
    write_run_manifest(out_dir, "probe", run_seed, config, outputs);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{std::string(kCliVersion) +
                 " - mode variational LSTM sequence experiments"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key-value config file; command-line flags win");

    GenDataOptions gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--seed", gen.seed, "master seed");
    gen_cmd->add_option("--dx", gen.input_dim, "frame dimension");
    gen_cmd->add_option("--frames", gen.num_frames, "frames per sequence");
    gen_cmd->add_option("--classes", gen.num_classes, "number of classes");
    gen_cmd->add_option("--reps", gen.reps, "samples per (class, mode)");
    gen_cmd->add_option("--noise", gen.noise, "gaussian noise sigma");
    gen_cmd->add_option("--appearance", gen.appearance,
                        "per-sample carrier spread (appearance analogue)");
    gen_cmd->add_option("--depth", gen.depth, "class-dynamics modulation depth");
    gen_cmd->add_option("--jitter", gen.jitter, "per-sequence condition jitter scale");
    gen_cmd->add_option("--ramp", gen.ramp, "neutral-start ramp length in frames");
    gen_cmd->add_option("--modes", gen.modes, "mode list, e.g. identity:1,additive:2");

    TrainOptions tr;
    CLI::App* train_cmd = app.add_subcommand("train", "train a sequence classifier");
    train_cmd->add_option("--dataset", tr.dataset_stem, "dataset stem (from gen-data)")
        ->required();
    train_cmd->add_option("--out", tr.out_dir, "output directory")->required();
    train_cmd->add_option("--variant", tr.variant, "lstm | modevar | modevar_crosscell");
    train_cmd->add_option("--seed", tr.seed, "training seed");
    train_cmd->add_option("--epochs", tr.epochs, "training epochs");
    train_cmd->add_option("--lr", tr.lr, "learning rate");
    train_cmd->add_option("--batch", tr.batch, "minibatch size");
    train_cmd->add_option("--hidden", tr.hidden, "hidden dimension");
    train_cmd->add_option("--optimizer", tr.optimizer, "adam | sgd_momentum");
    train_cmd->add_option("--tau", tr.tau, "first | random | <index>");
    train_cmd->add_option("--grad-clip", tr.grad_clip, "global-norm clip (<=0 disables)");
    train_cmd->add_option("--seen-modes", tr.seen_modes, "comma list of seen mode ids");
    train_cmd->add_option("--folds", tr.folds, "cross-validation folds");
    train_cmd->add_option("--fold", tr.fold, "fold index used for testing");
    train_cmd->add_flag("--literal-eq2", tr.literal_eq2,
                        "drive the bias cell with the dynamics gates (as printed)");
    train_cmd->add_flag("--diagonal-peephole", tr.diagonal_peephole,
                        "restrict peephole matrices to their diagonals");
    train_cmd->add_flag("--untied-cross", tr.untied_cross,
                        "separate matrices for the cross peepholes into the bias gates");

    EvalOptions ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained model per mode");
    eval_cmd->add_option("--dataset", ev.dataset_stem, "dataset stem")->required();
    eval_cmd->add_option("--model", ev.model_path, "model archive")->required();
    eval_cmd->add_option("--compare", ev.compare_path, "second archive to compare gaps with");
    eval_cmd->add_option("--out", ev.out_dir, "output directory")->required();
    eval_cmd->add_option("--split", ev.split, "train | test | all");

    GradcheckOptions gc;
    CLI::App* gc_cmd =
        app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    gc_cmd->add_option("--seeds", gc.seeds, "seeds per variant");
    gc_cmd->add_option("--tolerance", gc.tolerance, "max relative error");
    gc_cmd->add_option("--out", gc.out_dir, "optional output directory for gradcheck.json");

    ProbeOptions pr;
    CLI::App* probe_cmd =
        app.add_subcommand("probe", "trace latent features over a static sequence");
    probe_cmd->add_option("--dataset", pr.dataset_stem, "dataset stem")->required();
    probe_cmd->add_option("--model", pr.model_path, "model archive")->required();
    probe_cmd->add_option("--out", pr.out_dir, "output directory")->required();
    probe_cmd->add_option("--pair", pr.pair,
                          "same-class-diff-mode | same-class-same-mode");
    probe_cmd->add_option("--sample", pr.sample_index, "explicit sample index");
    probe_cmd->add_option("--sample2", pr.sample2_index, "second sample index");
    probe_cmd->add_option("--n-static", pr.n_static, "replication length N");
    probe_cmd->add_option("--tau", pr.tau, "first | random | <index>");
    probe_cmd->add_option("--first-k", pr.first_k, "feature dimensions to export");
    probe_cmd->add_option("--epsilon", pr.epsilon, "convergence threshold");

    std::vector<const char*> argv;
    argv.push_back("mvlstm");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen_cmd->parsed()) return cmd_gen_data(gen);
        if (train_cmd->parsed()) return cmd_train(tr);
        if (eval_cmd->parsed()) return cmd_eval(ev);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc);
        if (probe_cmd->parsed()) return cmd_probe(pr);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace mvlstm
