#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vlsa/matrix.hpp"
#include "vlsa/model.hpp"
#include "vlsa/triplet_data.hpp"

namespace vlsa {

enum class Direction { t2v, v2t, t2a, a2t, a2v, v2a };

const char* to_string(Direction d);
// Throws ValidationError listing the valid spellings.
Direction parse_direction(std::string_view s);
// {1,5,10} for text-video and video-audio, {1,5,10,50} for text-audio.
std::vector<int> default_ks(Direction d);
ModalityKind query_modality(Direction d);
ModalityKind gallery_modality(Direction d);

struct SimilarityMatrix {
  Matrix values;  // queries x gallery cosine similarities
  std::vector<std::string> query_ids;
  std::vector<std::string> gallery_ids;
};

// Rejects zero-norm rows, naming the offending row.
SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& gallery,
                                   std::vector<std::string> query_ids = {},
                                   std::vector<std::string> gallery_ids = {});

struct RetrievalReport {
  Direction direction = Direction::t2v;
  std::vector<int> ks;
  std::vector<double> recalls;  // percentages, one per k
  std::vector<int> ranks;       // 1-based rank of the correct item per query
  int batch = 0;

  double recall(int k) const;
};

/// Query i's correct gallery item is i. rank_i = 1 + #{j != i : s_ij >= s_ii}
/// (ties count against the query).
RetrievalReport recall_at_k(const SimilarityMatrix& sims, const std::vector<int>& ks, Direction direction = Direction::t2v);

/// How modalities outside the evaluated pair are treated in the joint pass.
enum class AbsentModality { joint, zero };
const char* to_string(AbsentModality a);
AbsentModality parse_absent_modality(std::string_view s);

struct EmbeddingTable {
  std::vector<std::string> ids;
  Matrix video;  // n x D
  Matrix text;
  Matrix audio;

  const Matrix& of(ModalityKind m) const;
};

struct EvalOptions {
  AbsentModality absent = AbsentModality::joint;
  ModalitySet joint = ModalitySet::all();
  int threads = 1;
};

// Unmasked forward pass per sample; rows in dataset order.
EmbeddingTable embed_dataset(const Model& model, const Dataset& data, const EvalOptions& opts = {},
                             ModalitySet zero_content = ModalitySet::none());

RetrievalReport evaluate(const Model& model, const Dataset& data, Direction direction, std::vector<int> ks = {},
                         const EvalOptions& opts = {});

nlohmann::json to_json(const RetrievalReport& r, const std::string& checkpoint_id, std::uint64_t seed);

}  // namespace vlsa
