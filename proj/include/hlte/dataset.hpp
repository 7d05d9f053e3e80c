#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hlte/matrix.hpp"
#include "hlte/rng.hpp"

namespace hlte::data {

// One unit of the combined two-sample dataset. r = 0 marks the experimental
// sample (treatment a observed, long-term outcome y unobserved); r = 1 marks
// the observational sample (y observed, a unobserved).
struct UnitRecord {
  std::vector<double> x;
  int r = 0;
  std::optional<int> a;     // present iff r == 0
  std::vector<double> s;    // surrogate block, observed for every unit
  std::optional<double> y;  // present iff r == 1
};

struct CombinedDataset {
  int d_x = 0;
  int d_s = 0;
  std::vector<UnitRecord> units;

  int n() const { return static_cast<int>(units.size()); }

  // throws DataError naming the first offending unit/field
  void validate() const;

  std::vector<int> indices_where_r(int r) const;
};

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold_of;  // unit index -> fold id in [0, k)

  std::vector<int> test_indices(int fold) const;
  std::vector<int> train_indices(int fold) const;
};

// CSV schema: x0,..,x{d_x-1},r,a,s0,..,s{d_s-1},y with `a` empty when r=1 and
// `y` empty when r=0; reals as decimal text with 17 significant digits.
CombinedDataset load_csv(const std::string& path);
void save_csv(const CombinedDataset& dataset, const std::string& path);

// Random partition stratified by r so every fold can fit every nuisance;
// within each stratum fold sizes differ by at most 1.
FoldAssignment make_folds(const CombinedDataset& dataset, int k, num::RngStream& rng);

// feature blocks used by the nuisance/learner stages
Matrix x_matrix(const CombinedDataset& dataset, const std::vector<int>& indices);
Matrix sx_matrix(const CombinedDataset& dataset, const std::vector<int>& indices);

// order-sensitive FNV fingerprint of shapes and values, for provenance
uint64_t fingerprint(const CombinedDataset& dataset);

}  // namespace hlte::data
