#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/dense.hpp"

namespace cronos {

/// Malformed input file. The message carries the path and, where it
/// applies, the 1-based row and column of the offending cell.
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Per-feature affine map x ↦ (x - mean) / stdev fitted on training rows.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stdev;

  bool empty() const noexcept { return mean.empty(); }
  /// Applies the map in place; a no-op when empty.
  void apply(Matrix& x) const;

  friend bool operator==(const Standardization&, const Standardization&) = default;
};

/// Fits on x (population stdev; constant columns get stdev 1).
Standardization fit_standardization(const Matrix& x);

/// Hidden network f(x) = Σ_k w2_k ReLU(w1_kᵀ x) used to label planted data.
struct PlantedNet {
  Matrix w1;                ///< h x d
  std::vector<double> w2;   ///< h

  std::vector<double> evaluate(const Matrix& x) const;
};

struct Dataset {
  Matrix x_train;
  std::vector<double> y_train;
  Matrix x_test;            ///< may have zero rows
  std::vector<double> y_test;
  Standardization standardization;
  std::optional<PlantedNet> planted;

  bool has_test() const noexcept { return x_test.rows() > 0; }
  /// Throws DataError on shape mismatches.
  void validate() const;
  /// Throws DataError unless every label is -1 or +1.
  void require_binary_labels() const;
};

/// Reads a numeric CSV into the training split. label_column < 0 counts
/// from the end (-1 is the last column). A first line with any non-numeric
/// cell is treated as a header. Labels drawn only from {0, 1} are mapped to
/// {-1, +1}.
Dataset load_csv(const std::string& path, int label_column = -1);

/// Raw binary layout, all little-endian:
///   "CRNS1" | u32 n | u32 d | n*d f32 features (row-major) | n f32 labels
Dataset load_rawf32(const std::string& path);
void write_rawf32(const std::string& path, const Matrix& x, std::span<const double> y);

/// Moves a seeded random fraction of the training rows to the test split.
void split_holdout(Dataset& ds, double fraction, std::uint64_t seed);

/// Fits on the training split, applies to both, and stores the statistics.
void standardize(Dataset& ds);

enum class SyntheticKind { Blobs, PlantedRelu };

/// n training rows plus max(1, n/4) test rows, labels in {-1, +1}.
///  - Blobs: centers ±(2.5/√d)·1, within-class N(0, noise² I).
///  - PlantedRelu: x ~ N(0, I), label sign(f(x) + noise·ε) for a hidden
///    8-unit ReLU net with alternating ±1 output weights; sign(0) = +1.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, std::size_t d, double noise,
                      std::uint64_t seed);

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string to_string(SyntheticKind kind);

void to_json(nlohmann::json& j, const Standardization& s);
void from_json(const nlohmann::json& j, Standardization& s);

}  // namespace cronos
