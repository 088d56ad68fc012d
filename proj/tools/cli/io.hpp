#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "infodesign/nn.hpp"

namespace infodesign::cli {

/// 17 significant digits; enough to read back the same double.
std::string format_double(double x);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws when absent.
  std::size_t column(const std::string& name) const;
  /// All rows of the named columns as doubles.
  Eigen::MatrixXd numeric(const std::vector<std::string>& columns) const;
};

/// Comma-separated, LF endings, header row first. Fields never contain commas.
std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Column names prefix_0 ... prefix_{n-1}.
std::vector<std::string> indexed_columns(const std::string& prefix, std::size_t n);

std::string design_csv(const Eigen::VectorXd& d);
Eigen::VectorXd read_design(const std::filesystem::path& path);

/// JSON snapshot holding architecture, parameters and the run context.
struct NetworkSnapshot {
  nn::Network network;
  std::string model;
  Eigen::VectorXd design;
};

std::string network_json(const NetworkSnapshot& snap);
NetworkSnapshot parse_network_json(const std::string& text);
/// Throws MissingSnapshotError when the file does not exist.
NetworkSnapshot read_network(const std::filesystem::path& path);

double parse_double(const std::string& s);

}  // namespace infodesign::cli
