#include "io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "config.hpp"

namespace infodesign::cli {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(const std::string& s) {
  if (s.empty()) throw MalformedConfigError("empty number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || (errno == ERANGE && std::isinf(v))) throw MalformedConfigError("not a number: '" + s + "'");
  return v;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::runtime_error("csv: no column '" + name + "'");
}

Eigen::MatrixXd CsvTable::numeric(const std::vector<std::string>& columns) const {
  std::vector<std::size_t> idx;
  for (const auto& c : columns) idx.push_back(column(c));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < idx.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_double(rows[r].at(idx[c]));
  return out;
}

namespace {

void append_row(std::string& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  out += '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    f.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return f;
}

}  // namespace

std::string to_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& r : table.rows) {
    if (r.size() != table.header.size()) throw std::logic_error("csv: row width differs from header");
    append_row(out, r);
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      t.header = split(line);
      first = false;
      continue;
    }
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != t.header.size()) throw std::runtime_error("csv: ragged row");
    t.rows.push_back(std::move(f));
  }
  if (first) throw std::runtime_error("csv: missing header");
  return t;
}

CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path)); }

std::vector<std::string> indexed_columns(const std::string& prefix, std::size_t n) {
  std::vector<std::string> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(prefix + "_" + std::to_string(i));
  return c;
}

std::string design_csv(const Eigen::VectorXd& d) {
  CsvTable t;
  t.header = indexed_columns("d", static_cast<std::size_t>(d.size()));
  t.rows.emplace_back();
  for (double x : d) t.rows.back().push_back(format_double(x));
  return to_csv(t);
}

Eigen::VectorXd read_design(const fs::path& path) {
  if (!fs::exists(path)) throw MissingSnapshotError("design file not found: " + path.string());
  const auto t = read_csv(path);
  if (t.rows.size() != 1) throw std::runtime_error("design file must hold exactly one row: " + path.string());
  return t.numeric(t.header).row(0).transpose();
}

std::string network_json(const NetworkSnapshot& snap) {
  const auto& c = snap.network.config();
  nlohmann::json j;
  j["format"] = "infodesign-network";
  j["version"] = 1;
  j["model"] = snap.model;
  j["input_dim_theta"] = c.input_dim_theta;
  j["input_dim_y"] = c.input_dim_y;
  j["hidden_layer_sizes"] = c.hidden_layer_sizes;
  j["activation"] = "relu";
  j["seed"] = c.seed;
  j["design"] = std::vector<double>(snap.design.data(), snap.design.data() + snap.design.size());
  const auto& p = snap.network.parameters();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  return j.dump(1) + "\n";
}

NetworkSnapshot parse_network_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format") != "infodesign-network" || j.at("version") != 1)
    throw std::runtime_error("not a network snapshot");
  nn::NetworkConfig c;
  c.input_dim_theta = j.at("input_dim_theta").get<std::size_t>();
  c.input_dim_y = j.at("input_dim_y").get<std::size_t>();
  c.hidden_layer_sizes = j.at("hidden_layer_sizes").get<std::vector<std::size_t>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  nn::Network net(c);
  const auto p = j.at("parameters").get<std::vector<double>>();
  if (p.size() != net.num_parameters()) throw std::runtime_error("snapshot parameter count does not match its architecture");
  net.parameters() = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  const auto d = j.at("design").get<std::vector<double>>();
  return {std::move(net), j.at("model").get<std::string>(),
          Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()))};
}

NetworkSnapshot read_network(const fs::path& path) {
  if (!fs::exists(path)) throw MissingSnapshotError("network snapshot not found: " + path.string());
  return parse_network_json(read_file(path));
}

}  // namespace infodesign::cli
