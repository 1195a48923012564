#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "morelab/rng.hpp"

namespace morelab {

using FeatureVector = std::vector<double>;

enum class LabelNoiseMode { kBradleyTerry, kDeterministic };

std::string to_string(LabelNoiseMode mode);
LabelNoiseMode label_noise_mode_from_string(const std::string& name);

// One preference comparison: the winner's features beat the loser's.
struct PreferencePair {
  std::string prompt_id;
  FeatureVector winner;
  FeatureVector loser;
  int source_id = 0;
};

// Generating description of one preference source: the shared weight plus
// a drift of magnitude alpha along a unit direction.
struct SourceSpec {
  int source_id = 0;
  std::string name;
  double drift_magnitude = 0.0;
  FeatureVector drift_direction;  // unit norm
  LabelNoiseMode label_noise = LabelNoiseMode::kBradleyTerry;
};

struct SynthesisSpec {
  int dim = 16;
  int n_per_source = 4000;
  FeatureVector shared_weight;  // nonzero
  std::vector<SourceSpec> sources;
  std::uint64_t seed = 0;

  int num_sources() const { return static_cast<int>(sources.size()); }
};

// Preference pairs grouped by source id. `spec` is present for synthetic
// data and absent for ingested files.
struct DiversifiedDataset {
  int dim = 0;
  std::vector<std::string> source_names;
  std::vector<std::vector<PreferencePair>> groups;
  std::optional<SynthesisSpec> spec;

  int num_sources() const { return static_cast<int>(groups.size()); }
  std::size_t total_pairs() const;
};

// Builds a random generating spec: shared weight drawn with the given norm,
// drift directions unit-normalized and (by default) projected orthogonal to
// the shared weight so "shared" vs "drift" stays identifiable.
SynthesisSpec make_random_spec(int dim, int num_sources,
                               const std::vector<double>& alphas,
                               LabelNoiseMode mode, double shared_norm,
                               bool orthogonal_drift, std::uint64_t seed);

// Drift-free single-source spec labelled purely by the base spec's shared
// weight; the held-out set every scheme is compared on.
SynthesisSpec shared_test_spec(const SynthesisSpec& base, int n_pairs,
                               std::uint64_t seed);

// Source-true reward: shared + drift component.
double true_reward(const SynthesisSpec& spec, const SourceSpec& source,
                   const FeatureVector& features);

// Label rule shared by synthesize(): Bradley-Terry draws the winner with
// probability sigmoid(delta), deterministic takes the argmax (ties -> first).
bool label_prefers_first(LabelNoiseMode mode, double reward_first,
                         double reward_second, Rng& rng);

DiversifiedDataset synthesize(const SynthesisSpec& spec);

using Featurizer =
    std::function<FeatureVector(const std::string& prompt, const std::string& response)>;

// Reads one JSON object per line. Two record forms are accepted:
//   {"source","prompt_id","chosen_features","rejected_features"}
//   {"source","prompt","chosen","rejected"}   (needs a featurizer)
// Lines starting with '#' and blank lines are skipped. Source names map to
// dense ids in first-seen order.
DiversifiedDataset load_jsonl(const std::string& path,
                              const Featurizer& featurizer = {});

// Writes the feature form, one pair per line, preceded by optional
// '#'-prefixed header lines.
void save_jsonl(const DiversifiedDataset& dataset, const std::string& path,
                const std::vector<std::string>& header_comments = {});

// Equalizes group sizes: larger sources are subsampled without replacement,
// smaller ones resampled with replacement.
DiversifiedDataset balance(const DiversifiedDataset& dataset, int n_per_source,
                           std::uint64_t seed);

// Per-source split; both halves keep all sources.
std::pair<DiversifiedDataset, DiversifiedDataset> split(
    const DiversifiedDataset& dataset, double test_fraction,
    std::uint64_t seed);

// Keeps the first `first_k` sources (used by the source-count sweep).
DiversifiedDataset restrict_sources(const DiversifiedDataset& dataset,
                                    int first_k);

// Copies one source out as a standalone single-source dataset.
DiversifiedDataset single_source_view(const DiversifiedDataset& dataset,
                                      int source_id);

// Signed hashing trick: bag of lowercase alphanumeric tokens, 64-bit FNV-1a,
// sign from the hash's low bit, L2-normalized. Empty text maps to the zero
// vector.
FeatureVector hash_featurize(const std::string& prompt,
                             const std::string& response, int dim);

struct DiverseBatch {
  std::vector<std::vector<const PreferencePair*>> sub_batches;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& sb : sub_batches) n += sb.size();
    return n;
  }
};

// Draws `per_source` pairs from every source per batch, without replacement
// within an epoch; each source reshuffles independently when its epoch is
// exhausted (a batch at the boundary tops up from the fresh shuffle).
class DiverseBatchSampler {
 public:
  DiverseBatchSampler(const DiversifiedDataset& dataset, int per_source,
                      std::uint64_t seed);

  DiverseBatch next();
  int steps_per_epoch() const;

 private:
  const DiversifiedDataset* dataset_;
  int per_source_;
  Rng rng_;
  std::vector<std::vector<std::size_t>> orders_;
  std::vector<std::size_t> cursors_;
};

}  // namespace morelab
