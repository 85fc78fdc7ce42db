#pragma once

#include <string>
#include <vector>

namespace fdivlab::cli {

/// Numeric table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add(std::vector<double> row) { rows.push_back(std::move(row)); }
};

/// 17 significant digits; "inf", "-inf" and "nan" for non-finite values.
std::string format_number(double x);

/// Comma-separated, header row, LF line endings.
std::string to_csv(const CsvTable& table);

/// Writes `content` to `path`, creating parent directories. Throws IoFailure.
void write_file(const std::string& path, const std::string& content);

/// "{kind}-{hash8}{suffix}.{ext}".
std::string artifact_name(const std::string& kind, const std::string& hash8, const std::string& ext,
                          const std::string& suffix = "");

}  // namespace fdivlab::cli
