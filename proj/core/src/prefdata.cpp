#include "morelab/prefdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "morelab/error.hpp"
#include "morelab/numeric.hpp"

namespace morelab {

using json = nlohmann::json;

namespace {

constexpr double kUnitTol = 1e-9;

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

void validate_spec(const SynthesisSpec& spec) {
  if (spec.dim < 1) throw Error("data", "synthesis spec: dim must be >= 1");
  if (spec.n_per_source < 1)
    throw Error("data", "synthesis spec: n_per_source must be >= 1");
  if (spec.sources.empty())
    throw Error("data", "synthesis spec: needs at least one source");
  if (static_cast<int>(spec.shared_weight.size()) != spec.dim)
    throw Error("data", "synthesis spec: shared weight dimension mismatch");
  if (!all_finite(spec.shared_weight))
    throw Error("data", "synthesis spec: non-finite shared weight");
  if (norm(spec.shared_weight) <= 0.0)
    throw Error("data", "synthesis spec: shared weight must be nonzero");
  for (const auto& src : spec.sources) {
    if (static_cast<int>(src.drift_direction.size()) != spec.dim)
      throw Error("data", "synthesis spec: drift direction dimension mismatch for source '" +
                              src.name + "'");
    if (!all_finite(src.drift_direction) || !std::isfinite(src.drift_magnitude))
      throw Error("data", "synthesis spec: non-finite drift for source '" + src.name + "'");
    if (src.drift_magnitude < 0.0)
      throw Error("data", "synthesis spec: negative drift magnitude for source '" +
                              src.name + "'");
    if (std::abs(norm(src.drift_direction) - 1.0) > kUnitTol)
      throw Error("data", "synthesis spec: drift direction of source '" + src.name +
                              "' is not unit norm");
  }
}

}  // namespace

std::string to_string(LabelNoiseMode mode) {
  return mode == LabelNoiseMode::kBradleyTerry ? "bradley_terry" : "deterministic";
}

LabelNoiseMode label_noise_mode_from_string(const std::string& name) {
  if (name == "bradley_terry") return LabelNoiseMode::kBradleyTerry;
  if (name == "deterministic") return LabelNoiseMode::kDeterministic;
  throw Error("config", "unknown label_noise_mode '" + name + "'");
}

std::size_t DiversifiedDataset::total_pairs() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

SynthesisSpec make_random_spec(int dim, int num_sources,
                               const std::vector<double>& alphas,
                               LabelNoiseMode mode, double shared_norm,
                               bool orthogonal_drift, std::uint64_t seed) {
  if (num_sources < 1) throw Error("data", "make_random_spec: num_sources must be >= 1");
  if (static_cast<int>(alphas.size()) != num_sources)
    throw Error("config", "alpha list length " + std::to_string(alphas.size()) +
                              " does not match source count " + std::to_string(num_sources));
  if (!(shared_norm > 0.0))
    throw Error("data", "make_random_spec: shared_norm must be positive");

  SynthesisSpec spec;
  spec.dim = dim;
  spec.seed = seed;

  Rng rng(derive_seed(seed, "spec"));
  FeatureVector w = rng.normal_vector(static_cast<std::size_t>(dim));
  double wn = norm(w);
  for (auto& v : w) v *= shared_norm / wn;
  spec.shared_weight = w;

  for (int i = 0; i < num_sources; ++i) {
    SourceSpec src;
    src.source_id = i;
    src.name = "src" + std::to_string(i);
    src.drift_magnitude = alphas[static_cast<std::size_t>(i)];
    src.label_noise = mode;
    FeatureVector u = rng.normal_vector(static_cast<std::size_t>(dim));
    if (orthogonal_drift) {
      double proj = dot(u, w) / norm_sq(w);
      for (int k = 0; k < dim; ++k) u[static_cast<std::size_t>(k)] -= proj * w[static_cast<std::size_t>(k)];
    }
    double un = norm(u);
    if (un <= 0.0) throw Error("data", "make_random_spec: degenerate drift direction draw");
    for (auto& v : u) v /= un;
    src.drift_direction = std::move(u);
    spec.sources.push_back(std::move(src));
  }
  return spec;
}

SynthesisSpec shared_test_spec(const SynthesisSpec& base, int n_pairs,
                               std::uint64_t seed) {
  SynthesisSpec spec;
  spec.dim = base.dim;
  spec.n_per_source = n_pairs;
  spec.shared_weight = base.shared_weight;
  spec.seed = seed;
  SourceSpec src;
  src.source_id = 0;
  src.name = "shared";
  src.drift_magnitude = 0.0;
  // Any unit direction works at alpha = 0.
  src.drift_direction.assign(static_cast<std::size_t>(base.dim), 0.0);
  src.drift_direction[0] = 1.0;
  src.label_noise =
      base.sources.empty() ? LabelNoiseMode::kBradleyTerry : base.sources[0].label_noise;
  spec.sources.push_back(std::move(src));
  return spec;
}

double true_reward(const SynthesisSpec& spec, const SourceSpec& source,
                   const FeatureVector& features) {
  return dot(spec.shared_weight, features) +
         source.drift_magnitude * dot(source.drift_direction, features);
}

bool label_prefers_first(LabelNoiseMode mode, double reward_first,
                         double reward_second, Rng& rng) {
  double delta = reward_first - reward_second;
  if (mode == LabelNoiseMode::kDeterministic) return delta >= 0.0;
  return rng.uniform() < sigmoid(delta);
}

DiversifiedDataset synthesize(const SynthesisSpec& spec) {
  validate_spec(spec);

  DiversifiedDataset out;
  out.dim = spec.dim;
  out.spec = spec;
  Rng rng(spec.seed);
  for (const auto& src : spec.sources) {
    out.source_names.push_back(src.name);
    std::vector<PreferencePair> group;
    group.reserve(static_cast<std::size_t>(spec.n_per_source));
    for (int i = 0; i < spec.n_per_source; ++i) {
      FeatureVector a = rng.normal_vector(static_cast<std::size_t>(spec.dim));
      FeatureVector b = rng.normal_vector(static_cast<std::size_t>(spec.dim));
      double ra = true_reward(spec, src, a);
      double rb = true_reward(spec, src, b);
      bool a_wins = label_prefers_first(src.label_noise, ra, rb, rng);
      PreferencePair pair;
      pair.prompt_id = "s" + std::to_string(src.source_id) + "_p" + std::to_string(i);
      pair.source_id = src.source_id;
      if (a_wins) {
        pair.winner = std::move(a);
        pair.loser = std::move(b);
      } else {
        pair.winner = std::move(b);
        pair.loser = std::move(a);
      }
      group.push_back(std::move(pair));
    }
    out.groups.push_back(std::move(group));
  }
  return out;
}

DiversifiedDataset load_jsonl(const std::string& path, const Featurizer& featurizer) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open '" + path + "'");

  DiversifiedDataset out;
  out.dim = -1;
  std::string line;
  std::size_t line_no = 0;
  auto source_id = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < out.source_names.size(); ++i) {
      if (out.source_names[i] == name) return static_cast<int>(i);
    }
    out.source_names.push_back(name);
    out.groups.emplace_back();
    return static_cast<int>(out.source_names.size() - 1);
  };
  auto fail = [&](const std::string& what) -> Error {
    return Error("data", path + ":" + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(std::string("malformed JSON line: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("source"))
      throw fail("unknown schema: expected an object with a 'source' field");

    PreferencePair pair;
    pair.source_id = source_id(rec["source"].get<std::string>());
    if (rec.contains("chosen_features") && rec.contains("rejected_features")) {
      pair.prompt_id = rec.value("prompt_id", "L" + std::to_string(line_no));
      try {
        pair.winner = rec["chosen_features"].get<FeatureVector>();
        pair.loser = rec["rejected_features"].get<FeatureVector>();
      } catch (const json::exception& e) {
        throw fail(std::string("bad feature array: ") + e.what());
      }
    } else if (rec.contains("prompt") && rec.contains("chosen") && rec.contains("rejected")) {
      if (!featurizer) throw fail("text record but no featurizer configured");
      pair.prompt_id = rec.value("prompt_id", "L" + std::to_string(line_no));
      const auto prompt = rec["prompt"].get<std::string>();
      pair.winner = featurizer(prompt, rec["chosen"].get<std::string>());
      pair.loser = featurizer(prompt, rec["rejected"].get<std::string>());
    } else {
      throw fail("unknown schema: need chosen_features/rejected_features or prompt/chosen/rejected");
    }

    if (pair.winner.size() != pair.loser.size())
      throw fail("dimension mismatch: chosen has " + std::to_string(pair.winner.size()) +
                 " features, rejected has " + std::to_string(pair.loser.size()));
    if (!all_finite(pair.winner) || !all_finite(pair.loser))
      throw fail("non-finite feature value");
    int d = static_cast<int>(pair.winner.size());
    if (out.dim < 0) {
      out.dim = d;
    } else if (out.dim != d) {
      throw fail("inconsistent dimension: expected " + std::to_string(out.dim) +
                 ", got " + std::to_string(d));
    }
    out.groups[static_cast<std::size_t>(pair.source_id)].push_back(std::move(pair));
  }
  if (out.dim < 0) throw Error("data", path + ": no records");
  return out;
}

void save_jsonl(const DiversifiedDataset& dataset, const std::string& path,
                const std::vector<std::string>& header_comments) {
  std::ofstream outf(path);
  if (!outf) throw Error("io", "cannot write '" + path + "'");
  for (const auto& c : header_comments) outf << "# " << c << "\n";
  for (std::size_t s = 0; s < dataset.groups.size(); ++s) {
    for (const auto& pair : dataset.groups[s]) {
      json rec;
      rec["source"] = dataset.source_names[s];
      rec["prompt_id"] = pair.prompt_id;
      rec["chosen_features"] = pair.winner;
      rec["rejected_features"] = pair.loser;
      outf << rec.dump() << "\n";
    }
  }
  if (!outf) throw Error("io", "write failed for '" + path + "'");
}

DiversifiedDataset balance(const DiversifiedDataset& dataset, int n_per_source,
                           std::uint64_t seed) {
  if (n_per_source < 1) throw Error("data", "balance: n_per_source must be >= 1");
  DiversifiedDataset out;
  out.dim = dataset.dim;
  out.source_names = dataset.source_names;
  out.spec = dataset.spec;
  Rng rng(seed);
  for (std::size_t s = 0; s < dataset.groups.size(); ++s) {
    const auto& group = dataset.groups[s];
    if (group.empty())
      throw Error("data", "balance: source '" + dataset.source_names[s] + "' is empty");
    std::vector<PreferencePair> picked;
    picked.reserve(static_cast<std::size_t>(n_per_source));
    const std::size_t n = static_cast<std::size_t>(n_per_source);
    if (group.size() >= n) {
      std::vector<std::size_t> idx(group.size());
      std::iota(idx.begin(), idx.end(), 0);
      rng.shuffle(idx);
      for (std::size_t i = 0; i < n; ++i) picked.push_back(group[idx[i]]);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        picked.push_back(group[rng.uniform_below(group.size())]);
    }
    out.groups.push_back(std::move(picked));
  }
  return out;
}

std::pair<DiversifiedDataset, DiversifiedDataset> split(
    const DiversifiedDataset& dataset, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw Error("data", "split: test_fraction must be in (0, 1)");
  DiversifiedDataset train, test;
  train.dim = test.dim = dataset.dim;
  train.source_names = test.source_names = dataset.source_names;
  train.spec = test.spec = dataset.spec;
  Rng rng(seed);
  for (std::size_t s = 0; s < dataset.groups.size(); ++s) {
    const auto& group = dataset.groups[s];
    const auto n = group.size();
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(n)));
    if (n_test < 1 || n_test >= n)
      throw Error("data", "split: source '" + dataset.source_names[s] + "' with " +
                              std::to_string(n) + " pairs cannot be split at fraction " +
                              std::to_string(test_fraction));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<long>(n_test));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<long>(n_test), idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    std::vector<PreferencePair> test_group, train_group;
    for (auto i : test_idx) test_group.push_back(group[i]);
    for (auto i : train_idx) train_group.push_back(group[i]);
    test.groups.push_back(std::move(test_group));
    train.groups.push_back(std::move(train_group));
  }
  return {std::move(train), std::move(test)};
}

DiversifiedDataset restrict_sources(const DiversifiedDataset& dataset, int first_k) {
  if (first_k < 1 || first_k > dataset.num_sources())
    throw Error("data", "restrict_sources: need 1 <= k <= " +
                            std::to_string(dataset.num_sources()));
  DiversifiedDataset out;
  out.dim = dataset.dim;
  const auto k = static_cast<std::size_t>(first_k);
  out.source_names.assign(dataset.source_names.begin(), dataset.source_names.begin() + static_cast<long>(k));
  out.groups.assign(dataset.groups.begin(), dataset.groups.begin() + static_cast<long>(k));
  if (dataset.spec) {
    SynthesisSpec spec = *dataset.spec;
    spec.sources.resize(k);
    out.spec = std::move(spec);
  }
  return out;
}

DiversifiedDataset single_source_view(const DiversifiedDataset& dataset, int source_id) {
  if (source_id < 0 || source_id >= dataset.num_sources())
    throw Error("data", "single_source_view: source " + std::to_string(source_id) +
                            " out of range");
  DiversifiedDataset out;
  out.dim = dataset.dim;
  out.source_names = {dataset.source_names[static_cast<std::size_t>(source_id)]};
  std::vector<PreferencePair> group = dataset.groups[static_cast<std::size_t>(source_id)];
  for (auto& p : group) p.source_id = 0;
  out.groups.push_back(std::move(group));
  return out;
}

FeatureVector hash_featurize(const std::string& prompt, const std::string& response,
                             int dim) {
  if (dim < 1) throw Error("data", "hash_featurize: dim must be >= 1");
  FeatureVector v(static_cast<std::size_t>(dim), 0.0);
  auto add_tokens = [&](char tag, const std::string& text) {
    std::string token;
    token.push_back(tag);
    token.push_back(':');
    const std::size_t prefix = 2;
    for (std::size_t i = 0; i <= text.size(); ++i) {
      unsigned char c = i < text.size() ? static_cast<unsigned char>(text[i]) : ' ';
      if (std::isalnum(c)) {
        token.push_back(static_cast<char>(std::tolower(c)));
      } else if (token.size() > prefix) {
        std::uint64_t h = fnv1a64(token);
        std::size_t idx = static_cast<std::size_t>((h >> 1) % static_cast<std::uint64_t>(dim));
        v[idx] += (h & 1) ? 1.0 : -1.0;
        token.resize(prefix);
      }
    }
  };
  add_tokens('p', prompt);
  add_tokens('r', response);
  double n = norm(v);
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
  return v;
}

DiverseBatchSampler::DiverseBatchSampler(const DiversifiedDataset& dataset,
                                         int per_source, std::uint64_t seed)
    : dataset_(&dataset), per_source_(per_source), rng_(seed) {
  if (per_source < 1)
    throw Error("data", "batch sampler: per_source must be >= 1");
  if (dataset.groups.empty())
    throw Error("data", "batch sampler: empty dataset");
  for (std::size_t s = 0; s < dataset.groups.size(); ++s) {
    if (dataset.groups[s].empty())
      throw Error("data", "batch sampler: source '" + dataset.source_names[s] + "' is empty");
    std::vector<std::size_t> order(dataset.groups[s].size());
    std::iota(order.begin(), order.end(), 0);
    rng_.shuffle(order);
    orders_.push_back(std::move(order));
    cursors_.push_back(0);
  }
}

DiverseBatch DiverseBatchSampler::next() {
  DiverseBatch batch;
  batch.sub_batches.resize(orders_.size());
  for (std::size_t s = 0; s < orders_.size(); ++s) {
    auto& order = orders_[s];
    auto& cursor = cursors_[s];
    auto& sub = batch.sub_batches[s];
    sub.reserve(static_cast<std::size_t>(per_source_));
    for (int i = 0; i < per_source_; ++i) {
      if (cursor == order.size()) {
        rng_.shuffle(order);
        cursor = 0;
      }
      sub.push_back(&dataset_->groups[s][order[cursor++]]);
    }
  }
  return batch;
}

int DiverseBatchSampler::steps_per_epoch() const {
  std::size_t max_n = 0;
  for (const auto& g : dataset_->groups) max_n = std::max(max_n, g.size());
  return static_cast<int>((max_n + static_cast<std::size_t>(per_source_) - 1) /
                          static_cast<std::size_t>(per_source_));
}

}  // namespace morelab
