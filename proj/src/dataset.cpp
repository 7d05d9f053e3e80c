#include "hlte/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hlte/errors.hpp"
#include "hlte/numerics.hpp"

namespace hlte::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

// strict double parse: the whole token must be consumed
double parse_double(const std::string& tok, int row, const std::string& col) {
  if (tok.empty())
    throw DataError("load_csv: row " + std::to_string(row) + ", column '" + col +
                    "': empty cell where a number is required");
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end != begin + tok.size())
    throw DataError("load_csv: row " + std::to_string(row) + ", column '" + col +
                    "': cannot parse '" + tok + "'");
  if (!std::isfinite(v))
    throw DataError("load_csv: row " + std::to_string(row) + ", column '" + col +
                    "': non-finite value");
  return v;
}

int parse_binary(const std::string& tok, int row, const std::string& col) {
  double v = parse_double(tok, row, col);
  if (v != 0.0 && v != 1.0)
    throw DataError("load_csv: row " + std::to_string(row) + ", column '" + col +
                    "': expected 0 or 1, got '" + tok + "'");
  return v == 1.0 ? 1 : 0;
}

}  // namespace

void CombinedDataset::validate() const {
  if (d_x < 1 || d_s < 1) throw DataError("dataset: d_x and d_s must be >= 1");
  bool saw_r0 = false, saw_r1 = false;
  for (int i = 0; i < n(); ++i) {
    const UnitRecord& u = units[i];
    const std::string where = "dataset: unit " + std::to_string(i);
    if (static_cast<int>(u.x.size()) != d_x) throw DataError(where + ": x length != d_x");
    if (static_cast<int>(u.s.size()) != d_s) throw DataError(where + ": s length != d_s");
    if (u.r != 0 && u.r != 1) throw DataError(where + ": r must be 0 or 1");
    if (u.r == 0) {
      if (!u.a.has_value()) throw DataError(where + ": r=0 unit missing a");
      if (u.y.has_value()) throw DataError(where + ": r=0 unit must not carry y");
      if (*u.a != 0 && *u.a != 1) throw DataError(where + ": a must be 0 or 1");
      saw_r0 = true;
    } else {
      if (u.a.has_value()) throw DataError(where + ": r=1 unit must not carry a");
      if (!u.y.has_value()) throw DataError(where + ": r=1 unit missing y");
      if (!std::isfinite(*u.y)) throw DataError(where + ": non-finite y");
      saw_r1 = true;
    }
    for (double v : u.x)
      if (!std::isfinite(v)) throw DataError(where + ": non-finite x");
    for (double v : u.s)
      if (!std::isfinite(v)) throw DataError(where + ": non-finite s");
  }
  if (!saw_r0 || !saw_r1)
    throw DataError("dataset: need at least one r=0 and one r=1 unit");
}

std::vector<int> CombinedDataset::indices_where_r(int r) const {
  std::vector<int> out;
  for (int i = 0; i < n(); ++i)
    if (units[i].r == r) out.push_back(i);
  return out;
}

std::vector<int> FoldAssignment::test_indices(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of.size()); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<int> FoldAssignment::train_indices(int fold) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(fold_of.size()); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

CombinedDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_csv: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: '" + path + "' is empty");
  std::vector<std::string> header = split_csv_line(line);

  // header must read x0..x{d_x-1}, r, a, s0..s{d_s-1}, y
  size_t pos = 0;
  int d_x = 0;
  while (pos < header.size() && header[pos] == "x" + std::to_string(d_x)) {
    ++pos;
    ++d_x;
  }
  if (d_x == 0) throw DataError("load_csv: header must start with x0");
  if (pos + 1 >= header.size() || header[pos] != "r" || header[pos + 1] != "a")
    throw DataError("load_csv: header must contain 'r,a' after the x block");
  pos += 2;
  int d_s = 0;
  while (pos < header.size() && header[pos] == "s" + std::to_string(d_s)) {
    ++pos;
    ++d_s;
  }
  if (d_s == 0) throw DataError("load_csv: header must contain s0 after 'a'");
  if (pos + 1 != header.size() || header[pos] != "y")
    throw DataError("load_csv: header must end with 'y'");

  CombinedDataset ds;
  ds.d_x = d_x;
  ds.d_s = d_s;

  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++row;
    std::vector<std::string> tok = split_csv_line(line);
    if (tok.size() != header.size())
      throw DataError("load_csv: row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(tok.size()));
    UnitRecord u;
    size_t c = 0;
    u.x.resize(d_x);
    for (int j = 0; j < d_x; ++j, ++c) u.x[j] = parse_double(tok[c], row, header[c]);
    u.r = parse_binary(tok[c], row, "r");
    ++c;
    if (!tok[c].empty()) {
      if (u.r == 1)
        throw DataError("load_csv: row " + std::to_string(row) +
                        ", column 'a': must be empty when r=1");
      u.a = parse_binary(tok[c], row, "a");
    } else if (u.r == 0) {
      throw DataError("load_csv: row " + std::to_string(row) +
                      ", column 'a': required when r=0");
    }
    ++c;
    u.s.resize(d_s);
    for (int j = 0; j < d_s; ++j, ++c) u.s[j] = parse_double(tok[c], row, header[c]);
    if (!tok[c].empty()) {
      if (u.r == 0)
        throw DataError("load_csv: row " + std::to_string(row) +
                        ", column 'y': must be empty when r=0");
      u.y = parse_double(tok[c], row, "y");
    } else if (u.r == 1) {
      throw DataError("load_csv: row " + std::to_string(row) +
                      ", column 'y': required when r=1");
    }
    ds.units.push_back(std::move(u));
  }
  ds.validate();
  return ds;
}

void save_csv(const CombinedDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_csv: cannot open '" + path + "' for writing");
  for (int j = 0; j < dataset.d_x; ++j) out << "x" << j << ",";
  out << "r,a,";
  for (int j = 0; j < dataset.d_s; ++j) out << "s" << j << ",";
  out << "y\n";
  for (const UnitRecord& u : dataset.units) {
    for (double v : u.x) out << num::format_g17(v) << ",";
    out << u.r << ",";
    if (u.a.has_value()) out << *u.a;
    out << ",";
    for (double v : u.s) out << num::format_g17(v) << ",";
    if (u.y.has_value()) out << num::format_g17(*u.y);
    out << "\n";
  }
  if (!out) throw IoError("save_csv: write to '" + path + "' failed");
}

FoldAssignment make_folds(const CombinedDataset& dataset, int k, num::RngStream& rng) {
  if (k < 2) throw ConfigError("make_folds: k must be >= 2");
  FoldAssignment fa;
  fa.k = k;
  fa.fold_of.assign(dataset.n(), -1);
  for (int r = 0; r <= 1; ++r) {
    std::vector<int> idx = dataset.indices_where_r(r);
    if (static_cast<int>(idx.size()) < k)
      throw ConfigError("make_folds: r=" + std::to_string(r) +
                        " stratum has fewer units than k");
    rng.shuffle(idx);
    for (size_t i = 0; i < idx.size(); ++i)
      fa.fold_of[idx[i]] = static_cast<int>(i % k);
  }
  return fa;
}

Matrix x_matrix(const CombinedDataset& dataset, const std::vector<int>& indices) {
  Matrix m(indices.size(), dataset.d_x);
  for (size_t i = 0; i < indices.size(); ++i) {
    const UnitRecord& u = dataset.units[indices[i]];
    for (int j = 0; j < dataset.d_x; ++j) m.at(i, j) = u.x[j];
  }
  return m;
}

Matrix sx_matrix(const CombinedDataset& dataset, const std::vector<int>& indices) {
  Matrix m(indices.size(), dataset.d_s + dataset.d_x);
  for (size_t i = 0; i < indices.size(); ++i) {
    const UnitRecord& u = dataset.units[indices[i]];
    for (int j = 0; j < dataset.d_s; ++j) m.at(i, j) = u.s[j];
    for (int j = 0; j < dataset.d_x; ++j) m.at(i, dataset.d_s + j) = u.x[j];
  }
  return m;
}

uint64_t fingerprint(const CombinedDataset& dataset) {
  uint64_t h = 0xcbf29ce484222325ull;
  h = num::fnv1a_u64(static_cast<uint64_t>(dataset.d_x), h);
  h = num::fnv1a_u64(static_cast<uint64_t>(dataset.d_s), h);
  h = num::fnv1a_u64(static_cast<uint64_t>(dataset.n()), h);
  for (const UnitRecord& u : dataset.units) {
    h = num::fnv1a_u64(static_cast<uint64_t>(u.r), h);
    h = num::fnv1a_u64(u.a.has_value() ? static_cast<uint64_t>(*u.a) : 2ull, h);
    h = num::fnv1a_double(u.y.value_or(0.0), h);
    for (double v : u.x) h = num::fnv1a_double(v, h);
    for (double v : u.s) h = num::fnv1a_double(v, h);
  }
  return h;
}

}  // namespace hlte::data
