#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "rmra/train.hpp"

namespace rmra {

namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    io::ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string accuracy_svg(const std::map<int, double>& accuracy) {
    constexpr double width = 640, height = 400, left = 60, right = 20, top = 30, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const int lo = accuracy.begin()->first, hi = accuracy.rbegin()->first;
    const double span = hi > lo ? static_cast<double>(hi - lo) : 1.0;
    auto px = [&](int snr) { return left + (hi > lo ? (snr - lo) / span : 0.5) * plot_w; };
    auto py = [&](double acc) { return top + (1.0 - acc) * plot_h; };

    std::ostringstream svg;
    svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
        << xml_escape("Average recognition rate vs SNR") << "</text>\n";
    // Axes and gridlines at 0, 0.25, ..., 1.
    svg << "<g stroke=\"#999\" stroke-width=\"1\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = py(k / 4.0);
        svg << "<line x1=\"" << left << "\" y1=\"" << fixed(y, 2) << "\" x2=\"" << left + plot_w << "\" y2=\""
            << fixed(y, 2) << "\"/>\n";
    }
    svg << "</g>\n<g font-size=\"11\" text-anchor=\"end\">\n";
    for (int k = 0; k <= 4; ++k)
        svg << "<text x=\"" << left - 6 << "\" y=\"" << fixed(py(k / 4.0) + 4, 2) << "\">" << fixed(k / 4.0, 2)
            << "</text>\n";
    svg << "</g>\n<g font-size=\"11\" text-anchor=\"middle\">\n";
    for (const auto& [snr, acc] : accuracy)
        svg << "<text x=\"" << fixed(px(snr), 2) << "\" y=\"" << top + plot_h + 18 << "\">" << snr << "</text>\n";
    svg << "</g>\n"
        << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"12\">SNR (dB)</text>\n"
        << "<text x=\"15\" y=\"" << top + plot_h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
        << top + plot_h / 2 << ")\">Accuracy</text>\n";
    svg << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& [snr, acc] : accuracy) {
        svg << (first ? "" : " ") << fixed(px(snr), 2) << ',' << fixed(py(acc), 2);
        first = false;
    }
    svg << "\"/>\n<g fill=\"#1f77b4\">\n";
    for (const auto& [snr, acc] : accuracy)
        svg << "<circle cx=\"" << fixed(px(snr), 2) << "\" cy=\"" << fixed(py(acc), 2) << "\" r=\"3\"/>\n";
    svg << "</g>\n</svg>\n";
    return svg.str();
}

}  // namespace

void emit_report(const SnrConfusion& confusion, const std::map<int, double>& accuracy_by_snr,
                 const std::vector<std::string>& class_names, const std::filesystem::path& out_dir) {
    if (confusion.by_snr.empty() || accuracy_by_snr.empty()) throw ContractError("emit_report: nothing to report");
    const std::size_t k = confusion.num_classes;
    std::vector<std::string> names = class_names;
    if (names.empty())
        for (std::size_t c = 0; c < k; ++c) names.push_back("class" + std::to_string(c));
    if (names.size() != k) throw ContractError("emit_report: class name count differs from matrix size");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    for (const auto& [snr, m] : confusion.by_snr) {
        std::ostringstream csv;
        csv << "true\\predicted";
        for (const auto& n : names) csv << ',' << n;
        csv << '\n';
        for (Index r = 0; r < m.rows(); ++r) {
            csv << names[static_cast<std::size_t>(r)];
            for (Index c = 0; c < m.cols(); ++c) csv << ',' << m(r, c);
            csv << '\n';
        }
        write_text(out_dir / ("confusion_" + std::to_string(snr) + ".csv"), csv.str());
    }

    std::ostringstream curve;
    curve << "snr_db,accuracy\n";
    for (const auto& [snr, acc] : accuracy_by_snr) curve << snr << ',' << fixed(acc) << '\n';
    write_text(out_dir / "accuracy_vs_snr.csv", curve.str());
    write_text(out_dir / "accuracy_vs_snr.svg", accuracy_svg(accuracy_by_snr));
}

void write_history(const TrainHistory& history, const std::filesystem::path& path) {
    std::ostringstream csv;
    csv << "epoch,train_loss,train_acc,val_acc\n";
    for (const auto& e : history)
        csv << e.epoch << ',' << fixed(e.train_loss, 8) << ',' << fixed(e.train_accuracy) << ','
            << fixed(e.val_accuracy) << '\n';
    write_text(path, csv.str());
}

ConfusionMatrix read_confusion_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::vector<std::vector<std::int64_t>> rows;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string cell;
        std::getline(cells, cell, ',');  // row label
        std::vector<std::int64_t> row;
        while (std::getline(cells, cell, ',')) row.push_back(std::stoll(cell));
        rows.push_back(std::move(row));
    }
    ConfusionMatrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<Index>(rows[r].size()) != m.cols()) throw FormatError(path.string() + ": ragged confusion CSV");
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    return m;
}

}  // namespace rmra
