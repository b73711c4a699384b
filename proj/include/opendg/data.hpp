#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "opendg/matrix.hpp"
#include "opendg/rng.hpp"

#include "json.hpp"

namespace opendg {

// Class index used for target samples outside the union label set.
inline constexpr int kOpenClass = -1;

// Per-domain class lists in raw dataset ids, plus the reindexing of the
// union label set C onto 0..|C|-1. Open classes never receive an index.
struct LabelSetSpec {
  std::vector<std::vector<int>> sources;  // raw class ids per source domain
  std::vector<int> target_known;          // raw ids, must lie in the union
  std::vector<int> target_open;           // raw ids, disjoint from the union

  std::vector<int> union_classes;  // sorted raw ids of C (derived)
  std::map<int, int> to_index;     // raw id -> [0, |C|) (derived)

  std::size_t num_classes() const { return union_classes.size(); }
  std::size_t num_domains() const { return sources.size(); }
  bool is_open(int raw_class) const;
  // Maps a raw id to its union index, or kOpenClass for open classes.
  int index_of(int raw_class) const;

  void finalize();  // builds derived fields, validates disjointness

  static LabelSetSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  // The default desk-scale split: 3 sources over classes {3,0,1}, {4,0,2},
  // {5,1,2}, target {0..5} known plus {6} open.
  static LabelSetSpec pacs_style();
};

// A batch (or a whole domain's dataset): features, one-hot labels over the
// union set, the reindexed class per row (kOpenClass for open rows, whose
// label row is all-zero), and the raw id for round-tripping files.
struct FeatureBatch {
  Matrix features;              // n x input_dim
  Matrix labels;                // n x |C|
  std::vector<int> class_index; // reindexed, or kOpenClass
  std::vector<int> raw_class;   // original dataset ids
  int domain_index = 0;

  std::size_t size() const { return features.rows; }
};

using Dataset = FeatureBatch;

// Defaults give a target that is reachable from the sources but not
// trivial: class clusters overlap through the noise, every domain sits on
// its own near-identity rigid map, and the open class lands inside the
// constellation where it attracts confident mistakes.
struct SyntheticSpec {
  int n_domains = 3;
  int classes_total = 7;
  int input_dim = 16;
  int samples_per_class = 100;
  double prototype_scale = 0.7;
  double domain_shift_scale = 0.13;
  double noise_scale = 0.6;
  LabelSetSpec labels = LabelSetSpec::pacs_style();
  std::uint64_t seed = 7;

  void validate() const;
};

// Class prototypes are drawn once; every domain (the target included) then
// applies its own random rigid map -- an orthogonalized perturbation of the
// identity plus a translation, both scaled by domain_shift_scale -- and adds
// Gaussian noise per sample. Deterministic per seed.
std::pair<std::vector<Dataset>, Dataset> generate_synthetic(const SyntheticSpec& spec);

// CSV schema: header "domain,class,f0,f1,...", one domain per file, raw
// class ids, '.'-decimal. Values round-trip bitwise (shortest form).
void save_csv(const Dataset& data, const std::string& path);
Dataset load_csv(const std::string& path, const LabelSetSpec& spec);

// Stratified split: ceil(fraction * n_c) samples of every class go to
// validation. Throws DataError if any class has fewer than 2 samples.
std::pair<Dataset, Dataset> split_validation(const Dataset& data, double fraction,
                                             std::uint64_t seed);

// Selects the given rows into a new batch.
Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& rows);

// Yields one batch of batch_size rows per domain per tick. Every domain is
// shuffled per pass; domains exhausted early reshuffle and cycle, so one
// epoch is ceil(min domain size / batch_size) steps.
class BatchIterator {
 public:
  BatchIterator(const std::vector<Dataset>* datasets, int batch_size,
                std::uint64_t seed);

  std::vector<FeatureBatch> next();
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }

 private:
  const std::vector<Dataset>* datasets_;
  int batch_size_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<std::size_t> cursor_;
  std::size_t steps_per_epoch_;

  void reshuffle(std::size_t domain);
};

}  // namespace opendg
