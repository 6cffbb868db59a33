#pragma once
// Report tables with text / csv / json renderings shared by the CLI surface.

#include <string>
#include <vector>

namespace pb {

enum class ReportFormat { Text, Csv, Json };
ReportFormat parse_report_format(const std::string& name);  // throws on unknown

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

std::string render_table(const Table& t, ReportFormat format);
// Multiple tables in one document; json wraps each as {name, columns, rows}.
std::string render_tables(const std::vector<Table>& tables, ReportFormat format);

std::string format_double(double v, int decimals = 1);

}  // namespace pb
