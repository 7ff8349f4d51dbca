// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fvm::data {

/// Comma-separated fields without quoting; identifiers in this toolkit never contain commas.
std::vector<std::string> split_csv_line(std::string_view line);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws std::invalid_argument when absent.
    std::size_t column(std::string_view name) const;
};

/// Reads a CSV with a header row. Rows must match the header width; blank lines are skipped.
CsvTable read_csv(const std::filesystem::path& path);

/// Shortest text that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text, std::string_view what);

}  // namespace fvm::data
