#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vlsa {

/// Input dimensions. Defaults are the full-size recipe (8 frames of 224x224,
/// 40 tokens, 30522-slot vocabulary, 256x256 spectrograms); desk() is the
/// laptop-scale configuration used for training runs and tests.
struct DataConfig {
  int frames = 8;
  int height = 224;
  int width = 224;
  int max_tokens = 40;
  int vocab_size = 30522;
  int time_bins = 256;
  int freq_bins = 256;

  static DataConfig desk();

  std::size_t video_size() const;
  std::size_t spectrogram_size() const;
  void validate() const;

  bool operator==(const DataConfig&) const = default;
};

nlohmann::json to_json(const DataConfig& c);
// Unknown keys are rejected; missing keys keep the values of `base`.
DataConfig data_config_from_json(const nlohmann::json& j, const DataConfig& base, const std::string& where);

struct Triplet {
  std::string id;
  std::vector<float> video;          // frames x 3 x height x width, values in [0, 1]
  std::vector<std::int32_t> tokens;  // max_tokens ids, trailing PAD
  std::vector<float> spectrogram;    // time_bins x freq_bins
  std::optional<int> latent_class;

  bool operator==(const Triplet&) const = default;
};

// Throws ValidationError if shapes or token ranges disagree with the config.
void check_triplet(const Triplet& t, const DataConfig& c);
// Number of leading non-PAD tokens.
int effective_length(const Triplet& t);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kMask = 1;
  static constexpr std::int32_t kUnk = 2;

  Vocab();
  explicit Vocab(const std::vector<std::string>& words);

  // Returns the id of `word`, adding it if new. Reserved spellings are rejected.
  std::int32_t add(const std::string& word);
  std::int32_t lookup(std::string_view word) const;
  const std::string& word(std::int32_t id) const;
  std::size_t size() const { return words_.size(); }
  // All entries including the reserved ones, in id order.
  const std::vector<std::string>& words() const { return words_; }

  bool operator==(const Vocab& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::int32_t, std::less<>> ids_;
};

// Lowercase, split on whitespace, map to ids (UNK when absent), truncate to
// `length` and right-pad with PAD.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocab& vocab, int length);
// Space-joined words for the non-PAD ids.
std::string detokenize(const std::vector<std::int32_t>& ids, const Vocab& vocab);

enum class SyntheticMode { correlated, random };
const char* to_string(SyntheticMode m);
SyntheticMode parse_synthetic_mode(std::string_view s);

struct Dataset {
  DataConfig config;
  Vocab vocab;
  std::vector<Triplet> samples;
  // Free-form provenance recorded in the manifest (generator mode, classes, seed).
  nlohmann::json info = nlohmann::json::object();
};

// Word inventory used by the synthetic generator; independent of n and seed
// so that separately generated splits share one vocabulary.
Vocab synthetic_vocab(int k_classes);

/// Deterministic synthetic triplets. In correlated mode every modality is
/// driven by one latent class plus a shared 4-d latent vector; in random mode
/// each modality draws its own class and latent vector.
Dataset generate_synthetic(int n, int k_classes, std::uint64_t seed, SyntheticMode mode,
                           const DataConfig& config = DataConfig{}, int first_index = 0);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace vlsa
