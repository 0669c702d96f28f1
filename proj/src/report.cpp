#include "maelab/report.hpp"

#include "maelab/binio.hpp"
#include "maelab/config.hpp"
#include "maelab/crc32.hpp"
#include "maelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

namespace maelab {

namespace {

constexpr double kAggregateTolerance = 1e-9;

std::string hex32(uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

uint32_t parse_hex32(const std::string& text, const std::string& context) {
    if (text.size() != 8 || text.find_first_not_of("0123456789abcdef") != std::string::npos) {
        throw IoError(context + " is not an 8-digit hex value: '" + text + "'");
    }
    return static_cast<uint32_t>(std::strtoul(text.c_str(), nullptr, 16));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    size_t pos = 0;
    while (pos <= line.size()) {
        const size_t comma = line.find(',', pos);
        fields.push_back(
            line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return fields;
}

/// Reader over the report's lines with one-line lookahead and positional
/// error messages.
struct LineReader {
    std::vector<std::string> lines;
    size_t next = 0;
    std::string source;

    bool done() const { return next >= lines.size(); }
    const std::string& peek() const {
        static const std::string empty;
        return done() ? empty : lines[next];
    }
    std::string take() {
        if (done()) throw IoError(source + ": report ends unexpectedly");
        return lines[next++];
    }
    void expect(const std::string& want) {
        const std::string got = take();
        if (got != want) {
            throw IoError(source + ": expected '" + want + "', got '" + got + "'");
        }
    }
};

bool is_lower_better(const std::string& metric) {
    return metric == "NIQE" || metric == "SAM" || metric == "ERGAS";
}

} // namespace

std::string report_text(const RunReport& report) {
    std::string s;
    s += report.format_version;
    s += "\n[config]\n";
    s += experiment_config_text(report.config);
    s += "[train]\n";
    s += "step,base,feature,total\n";
    for (size_t i = 0; i < report.train_log.size(); ++i) {
        const StepLog& e = report.train_log[i];
        s += std::to_string(i) + "," + format_double(e.base) + "," + format_double(e.feature) +
             "," + format_double(e.total) + "\n";
    }
    s += "[eval]\n";
    std::string header = "image";
    for (const std::string& m : report.eval.metric_names) header += "," + m;
    s += header + "\n";
    for (size_t i = 0; i < report.eval.per_image.size(); ++i) {
        std::string row = std::to_string(i);
        for (double v : report.eval.per_image[i]) row += "," + format_double(v);
        s += row + "\n";
    }
    std::string agg = "aggregate";
    for (double v : report.eval.aggregate) agg += "," + format_double(v);
    s += agg + "\n";
    s += "[meta]\n";
    s += "seed = " + std::to_string(report.seed) + "\n";
    s += "wall_time_seconds = " + format_double(report.wall_time_seconds) + "\n";
    s += "weight_checksum = " + hex32(report.weight_checksum) + "\n";
    s += "encoder_checksum = " + hex32(report.encoder_checksum) + "\n";
    s += "checksum = " + hex32(crc32(s.data(), s.size())) + "\n";
    return s;
}

void save_report(const std::filesystem::path& path, const RunReport& report) {
    write_file(path, report_text(report));
}

RunReport parse_report_text(const std::string& text, const std::string& source) {
    // the checksum line guards everything above it
    const std::string tail_key = "checksum = ";
    if (text.empty() || text.back() != '\n') {
        throw IoError(source + ": report does not end with a newline");
    }
    const size_t last_line_start = text.rfind('\n', text.size() - 2);
    const size_t body_end = last_line_start == std::string::npos ? 0 : last_line_start + 1;
    const std::string last_line = text.substr(body_end, text.size() - body_end - 1);
    if (last_line.rfind(tail_key, 0) != 0) {
        throw IoError(source + ": report is missing its trailing checksum line");
    }
    const uint32_t stored =
        parse_hex32(last_line.substr(tail_key.size()), source + ": report checksum");
    const uint32_t computed = crc32(text.data(), body_end);
    if (stored != computed) {
        throw IoError(source + ": report checksum mismatch (stored " + hex32(stored) +
                      ", computed " + hex32(computed) + ")");
    }

    LineReader in;
    in.source = source;
    size_t pos = 0;
    while (pos < body_end) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos || eol >= body_end) eol = body_end;
        in.lines.push_back(text.substr(pos, eol - pos));
        pos = eol + 1;
    }

    RunReport report;
    report.format_version = in.take();
    if (report.format_version != kReportFormatVersion) {
        throw IoError(source + ": unsupported report version '" + report.format_version + "'");
    }

    in.expect("[config]");
    std::string config_text;
    while (!in.done() && in.peek() != "[train]") config_text += in.take() + "\n";
    report.config = parse_experiment_config(parse_kv_text(config_text, source + " [config]"));

    in.expect("[train]");
    in.expect("step,base,feature,total");
    while (!in.done() && in.peek() != "[eval]") {
        const std::vector<std::string> f = split_csv(in.take());
        if (f.size() != 4) {
            throw IoError(source + ": train log row needs 4 fields, got " +
                          std::to_string(f.size()));
        }
        const int64_t step = parse_int_strict(f[0], source + ": train log step");
        if (step != static_cast<int64_t>(report.train_log.size())) {
            throw IoError(source + ": train log steps are not consecutive at step " + f[0]);
        }
        StepLog e;
        e.base = parse_double_strict(f[1], source + ": train log base");
        e.feature = parse_double_strict(f[2], source + ": train log feature");
        e.total = parse_double_strict(f[3], source + ": train log total");
        report.train_log.push_back(e);
    }

    in.expect("[eval]");
    const std::vector<std::string> header = split_csv(in.take());
    if (header.empty() || header[0] != "image") {
        throw IoError(source + ": eval table header must start with 'image'");
    }
    report.eval.metric_names.assign(header.begin() + 1, header.end());
    if (report.eval.metric_names != report.config.metrics) {
        throw IoError(source + ": eval table metrics do not match the config echo");
    }
    bool saw_aggregate = false;
    while (!in.done() && in.peek() != "[meta]") {
        const std::vector<std::string> f = split_csv(in.take());
        if (f.size() != header.size()) {
            throw IoError(source + ": eval row has " + std::to_string(f.size()) +
                          " fields where the header has " + std::to_string(header.size()));
        }
        std::vector<double> values;
        for (size_t i = 1; i < f.size(); ++i) {
            values.push_back(parse_double_strict(f[i], source + ": eval value"));
        }
        if (f[0] == "aggregate") {
            report.eval.aggregate = std::move(values);
            saw_aggregate = true;
            break;
        }
        const int64_t index = parse_int_strict(f[0], source + ": eval image index");
        if (index != static_cast<int64_t>(report.eval.per_image.size())) {
            throw IoError(source + ": eval rows are not in image order at row " + f[0]);
        }
        report.eval.per_image.push_back(std::move(values));
    }
    if (!saw_aggregate) throw IoError(source + ": eval table has no aggregate row");
    if (report.eval.per_image.empty()) {
        throw IoError(source + ": eval table has no per-image rows");
    }
    for (size_t m = 0; m < report.eval.metric_names.size(); ++m) {
        double sum = 0.0;
        for (const std::vector<double>& row : report.eval.per_image) sum += row[m];
        const double mean = sum / static_cast<double>(report.eval.per_image.size());
        if (std::fabs(mean - report.eval.aggregate[m]) > kAggregateTolerance) {
            throw IoError(source + ": aggregate for " + report.eval.metric_names[m] +
                          " is not the mean of the per-image values");
        }
    }

    in.expect("[meta]");
    auto meta_value = [&](const std::string& key) {
        const std::string line = in.take();
        const std::string prefix = key + " = ";
        if (line.rfind(prefix, 0) != 0) {
            throw IoError(source + ": expected '" + key + " = ...', got '" + line + "'");
        }
        return line.substr(prefix.size());
    };
    report.seed = parse_u64_strict(meta_value("seed"), source + ": meta seed");
    if (report.seed != report.config.seed) {
        throw IoError(source + ": meta seed does not match the config echo");
    }
    report.wall_time_seconds =
        parse_double_strict(meta_value("wall_time_seconds"), source + ": wall time");
    report.weight_checksum =
        parse_hex32(meta_value("weight_checksum"), source + ": weight_checksum");
    report.encoder_checksum =
        parse_hex32(meta_value("encoder_checksum"), source + ": encoder_checksum");
    if (!in.done()) {
        throw IoError(source + ": unexpected content after the [meta] section");
    }
    return report;
}

RunReport load_report(const std::filesystem::path& path) {
    return parse_report_text(read_file(path), path.string());
}

std::string train_log_csv(const RunReport& report) {
    std::string s = "step,base,feature,total\n";
    for (size_t i = 0; i < report.train_log.size(); ++i) {
        const StepLog& e = report.train_log[i];
        s += std::to_string(i) + "," + format_double(e.base) + "," + format_double(e.feature) +
             "," + format_double(e.total) + "\n";
    }
    return s;
}

std::string eval_csv(const EvalTable& eval) {
    std::string s = "image";
    for (const std::string& m : eval.metric_names) s += "," + m;
    s += "\n";
    for (size_t i = 0; i < eval.per_image.size(); ++i) {
        s += std::to_string(i);
        for (double v : eval.per_image[i]) s += "," + format_double(v);
        s += "\n";
    }
    s += "aggregate";
    for (double v : eval.aggregate) s += "," + format_double(v);
    s += "\n";
    return s;
}

bool reports_equal_ignoring_wall_time(const RunReport& a, const RunReport& b) {
    RunReport a2 = a;
    RunReport b2 = b;
    a2.wall_time_seconds = 0.0;
    b2.wall_time_seconds = 0.0;
    return report_text(a2) == report_text(b2);
}

// ---------------------------------------------------------------------------
// Cross-run comparison
// ---------------------------------------------------------------------------

ComparisonTable compare_runs(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw ValueError("compare_runs: no reports given");
    const RunReport& ref = reports[0];
    for (size_t i = 1; i < reports.size(); ++i) {
        const RunReport& r = reports[i];
        if (r.config.task != ref.config.task) {
            throw ValueError("compare_runs: report " + std::to_string(i) + " is for task " +
                             task_name(r.config.task) + " where the first is for " +
                             task_name(ref.config.task));
        }
        if (r.config.val_path != ref.config.val_path) {
            throw ValueError("compare_runs: report " + std::to_string(i) +
                             " was evaluated on val set '" + r.config.val_path +
                             "' where the first used '" + ref.config.val_path + "'");
        }
        if (r.eval.metric_names != ref.eval.metric_names) {
            throw ValueError("compare_runs: report " + std::to_string(i) +
                             " has a different metric list than the first");
        }
    }

    ComparisonTable table;
    table.metric_names = ref.eval.metric_names;
    for (const RunReport& r : reports) {
        table.row_labels.push_back(configuration_name(r.config.configuration));
        table.values.push_back(r.eval.aggregate);
    }
    table.best.assign(reports.size(), std::vector<bool>(table.metric_names.size(), false));
    for (size_t m = 0; m < table.metric_names.size(); ++m) {
        const bool lower = is_lower_better(table.metric_names[m]);
        double extreme = table.values[0][m];
        for (size_t r = 1; r < table.values.size(); ++r) {
            const double v = table.values[r][m];
            if (lower ? v < extreme : v > extreme) extreme = v;
        }
        for (size_t r = 0; r < table.values.size(); ++r) {
            if (table.values[r][m] == extreme) table.best[r][m] = true; // ties: flag all
        }
    }
    return table;
}

std::string comparison_csv(const ComparisonTable& table) {
    std::string s = "configuration";
    for (const std::string& m : table.metric_names) s += "," + m + "," + m + "_best";
    s += "\n";
    for (size_t r = 0; r < table.row_labels.size(); ++r) {
        s += table.row_labels[r];
        for (size_t m = 0; m < table.metric_names.size(); ++m) {
            s += "," + format_double(table.values[r][m]);
            s += table.best[r][m] ? ",1" : ",0";
        }
        s += "\n";
    }
    return s;
}

std::string comparison_text(const ComparisonTable& table) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head;
    head.push_back("configuration");
    for (const std::string& m : table.metric_names) head.push_back(m);
    cells.push_back(head);
    for (size_t r = 0; r < table.row_labels.size(); ++r) {
        std::vector<std::string> row;
        row.push_back(table.row_labels[r]);
        for (size_t m = 0; m < table.metric_names.size(); ++m) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.4f%s", table.values[r][m],
                          table.best[r][m] ? "*" : "");
            row.push_back(buf);
        }
        cells.push_back(row);
    }

    std::vector<size_t> widths(cells[0].size(), 0);
    for (const std::vector<std::string>& row : cells) {
        for (size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    }
    std::string s;
    for (const std::vector<std::string>& row : cells) {
        for (size_t c = 0; c < row.size(); ++c) {
            s += row[c];
            if (c + 1 < row.size()) s.append(widths[c] - row[c].size() + 2, ' ');
        }
        s += "\n";
    }
    return s;
}

} // namespace maelab
