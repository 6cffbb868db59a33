#include "pb/reports.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <stdexcept>

using nlohmann::json;

namespace pb {

ReportFormat parse_report_format(const std::string& name) {
    if (name == "text") return ReportFormat::Text;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw std::invalid_argument("unknown format '" + name + "' (expected text, csv or json)");
}

std::string format_double(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::string render_text(const Table& t) {
    std::vector<size_t> widths(t.columns.size(), 0);
    for (size_t i = 0; i < t.columns.size(); ++i) widths[i] = t.columns[i].size();
    for (const auto& row : t.rows) {
        for (size_t i = 0; i < row.size() && i < widths.size(); ++i) {
            widths[i] = std::max(widths[i], row[i].size());
        }
    }
    std::string out = "# " + t.name + "\n";
    auto emit_row = [&](const std::vector<std::string>& row) {
        for (size_t i = 0; i < widths.size(); ++i) {
            const std::string& cell = i < row.size() ? row[i] : std::string();
            out += cell;
            if (i + 1 < widths.size()) out.append(widths[i] - cell.size() + 2, ' ');
        }
        out += "\n";
    };
    emit_row(t.columns);
    std::vector<std::string> rule;
    for (size_t w : widths) rule.push_back(std::string(w, '-'));
    emit_row(rule);
    for (const auto& row : t.rows) emit_row(row);
    return out;
}

std::string render_csv(const Table& t) {
    std::string out;
    for (size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ",";
        out += csv_escape(t.columns[i]);
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out += ",";
            out += csv_escape(row[i]);
        }
        out += "\n";
    }
    return out;
}

json table_to_json(const Table& t) {
    return json{{"name", t.name}, {"columns", t.columns}, {"rows", t.rows}};
}

}  // namespace

std::string render_table(const Table& t, ReportFormat format) {
    switch (format) {
        case ReportFormat::Text: return render_text(t);
        case ReportFormat::Csv: return render_csv(t);
        case ReportFormat::Json: return table_to_json(t).dump(2) + "\n";
    }
    return "";
}

std::string render_tables(const std::vector<Table>& tables, ReportFormat format) {
    if (format == ReportFormat::Json) {
        json arr = json::array();
        for (const auto& t : tables) arr.push_back(table_to_json(t));
        return arr.dump(2) + "\n";
    }
    std::string out;
    for (size_t i = 0; i < tables.size(); ++i) {
        if (i) out += "\n";
        out += render_table(tables[i], format);
    }
    return out;
}

}  // namespace pb
