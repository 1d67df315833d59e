#include "cronos/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cronos/rng.hpp"

namespace cronos {

namespace {

constexpr std::array<char, 5> kRawMagic{'C', 'R', 'N', 'S', '1'};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

void put_f32(std::ostream& out, double value) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw DataError(path + ": truncated file while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto src = x.row(rows[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

}  // namespace

void Standardization::apply(Matrix& x) const {
  if (empty()) return;
  if (x.cols() != mean.size())
    throw DataError("standardization fitted on " + std::to_string(mean.size()) +
                    " features, data has " + std::to_string(x.cols()));
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mean[c]) / stdev[c];
  }
}

Standardization fit_standardization(const Matrix& x) {
  Standardization s;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  s.mean.assign(d, 0.0);
  s.stdev.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t r = 0; r < n; ++r) axpy(1.0, x.row(r), s.mean);
  for (double& m : s.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) var[c] += (row[c] - s.mean[c]) * (row[c] - s.mean[c]);
  }
  for (std::size_t c = 0; c < d; ++c) {
    const double sd = std::sqrt(var[c] / static_cast<double>(n));
    s.stdev[c] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

std::vector<double> PlantedNet::evaluate(const Matrix& x) const {
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t k = 0; k < w1.rows(); ++k)
      out[r] += w2[k] * std::max(0.0, dot(w1.row(k), x.row(r)));
  return out;
}

void Dataset::validate() const {
  if (y_train.size() != x_train.rows())
    throw DataError("dataset: " + std::to_string(x_train.rows()) + " training rows but " +
                    std::to_string(y_train.size()) + " labels");
  if (y_test.size() != x_test.rows())
    throw DataError("dataset: " + std::to_string(x_test.rows()) + " test rows but " +
                    std::to_string(y_test.size()) + " labels");
  if (has_test() && x_test.cols() != x_train.cols())
    throw DataError("dataset: train has " + std::to_string(x_train.cols()) +
                    " features, test has " + std::to_string(x_test.cols()));
}

void Dataset::require_binary_labels() const {
  auto check = [](std::span<const double> y, const char* split) {
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] != 1.0 && y[i] != -1.0)
        throw DataError(std::string("dataset: ") + split + " label at row " +
                        std::to_string(i + 1) + " is " + std::to_string(y[i]) +
                        ", expected -1 or +1");
  };
  check(y_train, "train");
  check(y_test, "test");
}

Dataset load_csv(const std::string& path, int label_column) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open file");

  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> values(cells.size());
    std::optional<std::size_t> bad;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        if (!bad) bad = c;
        continue;
      }
      values[c] = *v;
    }
    if (first_content) {
      first_content = false;
      width = cells.size();
      if (bad) continue;  // header
    }
    if (cells.size() != width)
      throw DataError(path + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " columns, expected " +
                      std::to_string(width));
    if (bad)
      throw DataError(path + ": row " + std::to_string(line_no) + ", column " +
                      std::to_string(*bad + 1) + ": non-numeric cell '" + cells[*bad] + "'");
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  if (width < 2) throw DataError(path + ": need at least one feature and one label column");

  const int w = static_cast<int>(width);
  const int label = label_column < 0 ? w + label_column : label_column;
  if (label < 0 || label >= w)
    throw DataError(path + ": label column " + std::to_string(label_column) +
                    " out of range for " + std::to_string(width) + " columns");

  Dataset ds;
  ds.x_train = Matrix(rows.size(), width - 1);
  ds.y_train.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t c_out = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<int>(c) == label) {
        ds.y_train[r] = rows[r][c];
      } else {
        ds.x_train(r, c_out++) = rows[r][c];
      }
    }
  }
  const bool zero_one = std::all_of(ds.y_train.begin(), ds.y_train.end(),
                                    [](double v) { return v == 0.0 || v == 1.0; });
  const bool has_zero = std::find(ds.y_train.begin(), ds.y_train.end(), 0.0) != ds.y_train.end();
  if (zero_one && has_zero)
    for (double& v : ds.y_train) v = v == 0.0 ? -1.0 : 1.0;
  return ds;
}

Dataset load_rawf32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::array<char, 5> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kRawMagic)
    throw DataError(path + ": bad header, expected magic \"CRNS1\"");
  const std::uint32_t n = get_u32(in, path, "row count");
  const std::uint32_t d = get_u32(in, path, "column count");
  if (n == 0 || d == 0) throw DataError(path + ": header declares an empty matrix");

  Dataset ds;
  ds.x_train = Matrix(n, d);
  ds.y_train.resize(n);
  for (std::uint32_t r = 0; r < n; ++r)
    for (std::uint32_t c = 0; c < d; ++c) {
      const std::uint32_t bits = get_u32(in, path, "features");
      const float v = std::bit_cast<float>(bits);
      if (!std::isfinite(v))
        throw DataError(path + ": row " + std::to_string(r + 1) + ", column " +
                        std::to_string(c + 1) + ": non-finite value");
      ds.x_train(r, c) = v;
    }
  for (std::uint32_t r = 0; r < n; ++r)
    ds.y_train[r] = std::bit_cast<float>(get_u32(in, path, "labels"));
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError(path + ": trailing bytes after " + std::to_string(n) + " labels");
  return ds;
}

void write_rawf32(const std::string& path, const Matrix& x, std::span<const double> y) {
  if (y.size() != x.rows()) throw DataError("write_rawf32: label count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(kRawMagic.data(), kRawMagic.size());
  put_u32(out, static_cast<std::uint32_t>(x.rows()));
  put_u32(out, static_cast<std::uint32_t>(x.cols()));
  for (double v : x.data()) put_f32(out, v);
  for (double v : y) put_f32(out, v);
  if (!out) throw DataError(path + ": write failed");
}

void split_holdout(Dataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_holdout: fraction must be in [0, 1)");
  const std::size_t n = ds.x_train.rows();
  const auto n_test = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  if (n_test == 0) return;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(test_rows.begin(), test_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  std::vector<double> y_test(n_test), y_train(train_rows.size());
  for (std::size_t k = 0; k < n_test; ++k) y_test[k] = ds.y_train[test_rows[k]];
  for (std::size_t k = 0; k < train_rows.size(); ++k) y_train[k] = ds.y_train[train_rows[k]];
  ds.x_test = take_rows(ds.x_train, test_rows);
  ds.x_train = take_rows(ds.x_train, train_rows);
  ds.y_test = std::move(y_test);
  ds.y_train = std::move(y_train);
}

void standardize(Dataset& ds) {
  ds.standardization = fit_standardization(ds.x_train);
  ds.standardization.apply(ds.x_train);
  if (ds.has_test()) ds.standardization.apply(ds.x_test);
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double noise,
                      std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("gen_synthetic: n and d must be >= 1");
  if (!(noise >= 0.0)) throw std::invalid_argument("gen_synthetic: noise must be >= 0");
  Rng rng(seed);
  const std::size_t n_test = std::max<std::size_t>(1, n / 4);
  Dataset ds;

  if (kind == SyntheticKind::PlantedRelu) {
    constexpr std::size_t hidden = 8;
    PlantedNet net{gaussian_matrix(rng, hidden, d), std::vector<double>(hidden)};
    for (std::size_t k = 0; k < hidden; ++k) net.w2[k] = k % 2 == 0 ? 1.0 : -1.0;
    ds.planted = net;
  }

  auto draw = [&](std::size_t rows, Matrix& x, std::vector<double>& y) {
    y.resize(rows);
    if (kind == SyntheticKind::Blobs) {
      x = Matrix(rows, d);
      const double c = 2.5 / std::sqrt(static_cast<double>(d));
      for (std::size_t r = 0; r < rows; ++r) {
        y[r] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < d; ++j) x(r, j) = y[r] * c + noise * rng.normal();
      }
    } else {
      x = gaussian_matrix(rng, rows, d);
      const auto f = ds.planted->evaluate(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const double z = f[r] + (noise > 0.0 ? noise * rng.normal() : 0.0);
        y[r] = z >= 0.0 ? 1.0 : -1.0;
      }
    }
  };
  draw(n, ds.x_train, ds.y_train);
  draw(n_test, ds.x_test, ds.y_test);
  return ds;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "blobs") return SyntheticKind::Blobs;
  if (name == "planted-relu") return SyntheticKind::PlantedRelu;
  throw std::invalid_argument("unknown synthetic kind '" + name + "' (blobs | planted-relu)");
}

std::string to_string(SyntheticKind kind) {
  return kind == SyntheticKind::Blobs ? "blobs" : "planted-relu";
}

void to_json(nlohmann::json& j, const Standardization& s) {
  j = nlohmann::json{{"mean", s.mean}, {"stdev", s.stdev}};
}

void from_json(const nlohmann::json& j, Standardization& s) {
  j.at("mean").get_to(s.mean);
  j.at("stdev").get_to(s.stdev);
  if (s.mean.size() != s.stdev.size()) throw DataError("standardization: length mismatch");
}

}  // namespace cronos
