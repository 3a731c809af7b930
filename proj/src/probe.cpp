#include "mvlstm/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mvlstm/serialize.hpp"

namespace mvlstm {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

// diverging blue -> white -> red over [-1, 1]
std::string heat_color(double v) {
    const double t = std::clamp(v, -1.0, 1.0);
    const int blue[3] = {59, 76, 192};
    const int red[3] = {180, 4, 38};
    int rgb[3];
    for (int c = 0; c < 3; ++c) {
        const double from = 255.0;
        const double to = t < 0.0 ? blue[c] : red[c];
        rgb[c] = static_cast<int>(std::lround(from + (to - from) * std::abs(t)));
    }
    std::ostringstream out;
    out << "rgb(" << rgb[0] << "," << rgb[1] << "," << rgb[2] << ")";
    return out.str();
}

std::string trace_csv(const ProbeTrace& trace, std::size_t first_k) {
    std::ostringstream out;
    out << "dim";
    for (std::size_t t = 1; t <= trace.features.rows; ++t) out << ",t" << t;
    out << "\n";
    for (std::size_t d = 0; d < first_k; ++d) {
        out << d;
        for (std::size_t t = 0; t < trace.features.rows; ++t)
            out << "," << format_double(trace.features(t, d));
        out << "\n";
    }
    return out.str();
}

std::string trace_svg(const ProbeTrace& trace, std::size_t first_k) {
    const std::size_t steps = trace.features.rows;
    const double cell = 16.0;
    const double left = 64.0, top = 34.0, bottom = 46.0, right = 96.0;
    const double grid_w = cell * static_cast<double>(steps);
    const double grid_h = cell * static_cast<double>(first_k);
    const double width = left + grid_w + right;
    const double height = top + grid_h + bottom;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_coord(width)
        << "\" height=\"" << format_coord(height) << "\" viewBox=\"0 0 " << format_coord(width)
        << " " << format_coord(height) << "\">\n";
    svg << "<defs><linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
        << "<stop offset=\"0\" stop-color=\"" << heat_color(-1.0) << "\"/>"
        << "<stop offset=\"0.5\" stop-color=\"" << heat_color(0.0) << "\"/>"
        << "<stop offset=\"1\" stop-color=\"" << heat_color(1.0) << "\"/>"
        << "</linearGradient></defs>\n";
    svg << "<rect width=\"" << format_coord(width) << "\" height=\"" << format_coord(height)
        << "\" fill=\"white\"/>\n";
    svg << "<text x=\"" << format_coord(left) << "\" y=\"20\" font-family=\"sans-serif\" "
           "font-size=\"13\">"
        << xml_escape(trace.sample_id) << " (" << to_string(trace.variant) << ")</text>\n";

    for (std::size_t d = 0; d < first_k; ++d) {
        const double y = top + cell * static_cast<double>(d);
        for (std::size_t t = 0; t < steps; ++t) {
            const double x = left + cell * static_cast<double>(t);
            svg << "<rect x=\"" << format_coord(x) << "\" y=\"" << format_coord(y)
                << "\" width=\"16\" height=\"16\" fill=\"" << heat_color(trace.features(t, d))
                << "\"/>\n";
        }
        svg << "<text x=\"" << format_coord(left - 6) << "\" y=\""
            << format_coord(y + cell - 4) << "\" text-anchor=\"end\" "
               "font-family=\"sans-serif\" font-size=\"10\">"
            << d << "</text>\n";
    }

    for (std::size_t t = 0; t < steps; t += 5) {
        const double x = left + cell * static_cast<double>(t) + cell / 2;
        svg << "<text x=\"" << format_coord(x) << "\" y=\"" << format_coord(top + grid_h + 14)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
            << (t + 1) << "</text>\n";
    }
    svg << "<text x=\"" << format_coord(left + grid_w / 2) << "\" y=\""
        << format_coord(top + grid_h + 32)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">timestep"
           "</text>\n";
    svg << "<text x=\"14\" y=\"" << format_coord(top + grid_h / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
           "transform=\"rotate(-90 14 "
        << format_coord(top + grid_h / 2) << ")\">dimension</text>\n";

    const double bar_x = left + grid_w + 24;
    svg << "<rect x=\"" << format_coord(bar_x) << "\" y=\"" << format_coord(top)
        << "\" width=\"14\" height=\"" << format_coord(grid_h)
        << "\" fill=\"url(#scale)\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
    const struct {
        double value;
        double y;
    } ticks[] = {{1.0, top + 4}, {0.0, top + grid_h / 2 + 4}, {-1.0, top + grid_h}};
    for (const auto& tick : ticks) {
        svg << "<text x=\"" << format_coord(bar_x + 20) << "\" y=\"" << format_coord(tick.y)
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << format_coord(tick.value)
            << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

ProbeTrace trace_features(const CellParams& params, std::span<const Vector> static_seq,
                          bool record_hat) {
    if (static_seq.empty()) fail("trace_features: empty static sequence");
    const std::size_t dx = input_dim_of(params);
    const std::size_t dh = hidden_dim_of(params);
    for (const Vector& f : static_seq) {
        if (f.size() != dx) fail("trace_features: frame dim mismatch");
        if (f.data != static_seq[0].data)
            fail("trace_features: input is not static (frames must be bitwise equal)");
    }

    ProbeTrace trace;
    trace.variant = variant_of(params);
    trace.length = static_seq.size();
    trace.features = Matrix(static_seq.size(), dh);
    const bool modevar = trace.variant != Variant::lstm;
    if (record_hat && modevar) trace.features_hat = Matrix(static_seq.size(), dh);

    const ForwardResult fwd = forward_sequence(params, static_seq, static_seq[0]);
    for (std::size_t t = 0; t < fwd.caches.size(); ++t) {
        const StepCache& cache = fwd.caches[t];
        const Vector h = hadamard(cache.o, cache.tanh_c);
        for (std::size_t d = 0; d < dh; ++d) trace.features(t, d) = h[d];
        if (record_hat && modevar) {
            const Vector h_hat = hadamard(cache.o, cache.tanh_c_hat);
            for (std::size_t d = 0; d < dh; ++d) trace.features_hat(t, d) = h_hat[d];
        }
    }
    return trace;
}

ProbeReport convergence_report(const ProbeTrace& trace, double epsilon) {
    if (epsilon <= 0.0) fail("convergence_report: epsilon must be positive");
    const Matrix& rows = trace.features;
    if (rows.rows == 0) fail("convergence_report: empty trace");

    ProbeReport report;
    report.epsilon = epsilon;
    for (std::size_t t = 1; t < rows.rows; ++t) {
        double gap = 0.0;
        for (std::size_t d = 0; d < rows.cols; ++d)
            gap = std::max(gap, std::abs(rows(t, d) - rows(t - 1, d)));
        if (gap < epsilon) {
            report.convergence_time = t + 1;  // rows are 1-indexed as timesteps
            break;
        }
    }
    report.converged_value = Vector(rows.cols);
    for (std::size_t d = 0; d < rows.cols; ++d)
        report.converged_value[d] = rows(rows.rows - 1, d);
    return report;
}

double pair_divergence(const ProbeReport& a, const ProbeReport& b) {
    if (!a.convergence_time || !b.convergence_time)
        fail("pair_divergence: both traces must have converged");
    if (a.converged_value.size() != b.converged_value.size())
        fail("pair_divergence: converged values have different dims");
    return euclidean_distance(a.converged_value, b.converged_value);
}

void export_figure(std::span<const ProbeTrace> traces, std::size_t first_k,
                   const std::filesystem::path& stem) {
    if (traces.empty()) fail("export_figure: no traces");
    for (const ProbeTrace& trace : traces)
        if (first_k > trace.features.cols)
            fail("export_figure: first_k exceeds the trace feature dim");

    for (std::size_t n = 0; n < traces.size(); ++n) {
        std::filesystem::path base = stem;
        if (traces.size() > 1) base += "_" + std::to_string(n);
        std::filesystem::path csv = base;
        csv += ".csv";
        std::filesystem::path svg = base;
        svg += ".svg";
        atomic_write_file(csv, trace_csv(traces[n], first_k));
        atomic_write_file(svg, trace_svg(traces[n], first_k));
    }
}

}  // namespace mvlstm
