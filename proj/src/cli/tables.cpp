#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "hanam/cli.hpp"
#include "hanam/errors.hpp"

namespace hanam::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string where(const CsvTable& t, std::size_t row) {
  return t.source + ":" + std::to_string(t.line_numbers[row]) + ": ";
}

std::unordered_map<std::string, Index> index_ids(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Index> out;
  for (std::size_t i = 0; i < ids.size(); ++i) out.emplace(ids[i], static_cast<Index>(i));
  return out;
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  CsvTable t;
  t.source = path.string();
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || trim(line).front() == '#') continue;
    auto fields = split_fields(line);
    if (has_header && t.header.empty()) {
      t.header = std::move(fields);
      width = t.header.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width)
      fail(ErrorKind::Parse, t.source + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                                 " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(lineno);
  }
  if (has_header && t.header.empty()) fail(ErrorKind::Parse, t.source + ": missing header row");
  return t;
}

NodeData read_covariates(const std::filesystem::path& path, bool standardize) {
  const CsvTable t = read_csv(path);
  if (t.header.empty() || t.header.front() != "id")
    fail(ErrorKind::Parse, t.source + ":1: first column must be 'id'");
  if (t.rows.size() < 2) fail(ErrorKind::BadShape, t.source + ": need at least 2 nodes");
  const std::size_t n = t.rows.size();
  const std::size_t q = t.header.size() - 1;

  NodeData out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = t.rows[i][0];
    if (id.empty()) fail(ErrorKind::Parse, where(t, i) + "empty node id");
    if (!seen.insert(id).second) fail(ErrorKind::Parse, where(t, i) + "duplicate node id '" + id + "'");
    out.ids.push_back(id);
  }

  std::vector<Vector> columns{Vector::Ones(static_cast<Index>(n))};
  out.column_names.push_back("intercept");
  out.attributes.values.resize(static_cast<Index>(n), static_cast<Index>(q));
  out.attributes.categorical.assign(q, false);

  for (std::size_t c = 0; c < q; ++c) {
    const std::string& name = t.header[c + 1];
    std::vector<std::optional<double>> nums(n);
    bool numeric = true;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& cell = t.rows[i][c + 1];
      if (cell.empty()) fail(ErrorKind::Parse, where(t, i) + "missing value in column '" + name + "'");
      nums[i] = parse_number(cell);
      if (!nums[i]) numeric = false;
    }
    if (numeric) {
      Vector v(static_cast<Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(*nums[i])) fail(ErrorKind::Parse, where(t, i) + "non-finite value in column '" + name + "'");
        v(static_cast<Index>(i)) = *nums[i];
      }
      if (standardize) {
        const double mean = v.mean();
        const double sd = std::sqrt((v.array() - mean).square().sum() / static_cast<double>(n - 1));
        if (!(sd > 0.0)) fail(ErrorKind::InvalidArgument, t.source + ": column '" + name + "' is constant");
        v = (v.array() - mean) / sd;
      }
      out.attributes.values.col(static_cast<Index>(c)) = v;
      columns.push_back(v);
      out.column_names.push_back(name);
      continue;
    }
    // Categorical: levels sorted, the first is the reference.
    std::map<std::string, int> levels;
    for (std::size_t i = 0; i < n; ++i) levels.emplace(t.rows[i][c + 1], 0);
    int code = 0;
    for (auto& [level, k] : levels) k = code++;
    out.attributes.categorical[c] = true;
    for (std::size_t i = 0; i < n; ++i)
      out.attributes.values(static_cast<Index>(i), static_cast<Index>(c)) = levels.at(t.rows[i][c + 1]);
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      Vector ind(static_cast<Index>(n));
      for (std::size_t i = 0; i < n; ++i) ind(static_cast<Index>(i)) = t.rows[i][c + 1] == it->first ? 1.0 : 0.0;
      columns.push_back(ind);
      out.column_names.push_back(name + "=" + it->first);
    }
  }

  out.X.resize(static_cast<Index>(n), static_cast<Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) out.X.col(static_cast<Index>(j)) = columns[j];
  return out;
}

Adjacency read_edge_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  CsvTable t = read_csv(path, false);
  const auto index = index_ids(ids);
  const Index n = static_cast<Index>(ids.size());
  Matrix w = Matrix::Zero(n, n);
  std::size_t start = 0;
  if (!t.rows.empty() && t.rows[0][0] == "src") start = 1;
  if (!t.rows.empty() && (t.rows[0].size() < 2 || t.rows[0].size() > 3))
    fail(ErrorKind::Parse, where(t, 0) + "expected src,dst[,weight]");
  for (std::size_t r = start; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto src = index.find(row[0]);
    const auto dst = index.find(row[1]);
    if (src == index.end()) fail(ErrorKind::Parse, where(t, r) + "unknown node '" + row[0] + "'");
    if (dst == index.end()) fail(ErrorKind::Parse, where(t, r) + "unknown node '" + row[1] + "'");
    double weight = 1.0;
    if (row.size() == 3) {
      const auto v = parse_number(row[2]);
      if (!v || !std::isfinite(*v)) fail(ErrorKind::Parse, where(t, r) + "weight '" + row[2] + "' is not a number");
      weight = *v;
    }
    if (weight < 0.0) fail(ErrorKind::NegativeEntry, where(t, r) + "negative weight " + row[2]);
    if (src->second == dst->second) fail(ErrorKind::NonzeroDiagonal, where(t, r) + "self-loop on '" + row[0] + "'");
    if (w(src->second, dst->second) != 0.0)
      fail(ErrorKind::Parse, where(t, r) + "duplicate edge " + row[0] + " -> " + row[1]);
    w(src->second, dst->second) = weight;
  }
  return Adjacency(std::move(w), ids);
}

Vector read_outcome(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != 2 || t.header[0] != "id")
    fail(ErrorKind::Parse, t.source + ":1: expected header 'id,<outcome>'");
  const auto index = index_ids(ids);
  Vector y(static_cast<Index>(ids.size()));
  std::vector<bool> seen(ids.size(), false);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto it = index.find(t.rows[r][0]);
    if (it == index.end()) fail(ErrorKind::Parse, where(t, r) + "unknown node '" + t.rows[r][0] + "'");
    if (seen[static_cast<std::size_t>(it->second)])
      fail(ErrorKind::Parse, where(t, r) + "duplicate node '" + t.rows[r][0] + "'");
    const auto v = parse_number(t.rows[r][1]);
    if (!v || !std::isfinite(*v)) fail(ErrorKind::Parse, where(t, r) + "outcome '" + t.rows[r][1] + "' is not a number");
    y(it->second) = *v;
    seen[static_cast<std::size_t>(it->second)] = true;
  }
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!seen[i]) fail(ErrorKind::Parse, t.source + ": no outcome for node '" + ids[i] + "'");
  return y;
}

}  // namespace hanam::cli
