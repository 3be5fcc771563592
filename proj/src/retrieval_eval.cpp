#include "vlsa/retrieval_eval.hpp"

#include <algorithm>

#include "vlsa/error.hpp"
#include "vlsa/parallel.hpp"

namespace vlsa {

namespace {
constexpr std::pair<Direction, const char*> kDirections[] = {{Direction::t2v, "t2v"}, {Direction::v2t, "v2t"},
                                                             {Direction::t2a, "t2a"}, {Direction::a2t, "a2t"},
                                                             {Direction::a2v, "a2v"}, {Direction::v2a, "v2a"}};
}

const char* to_string(Direction d) {
  for (const auto& [dir, name] : kDirections)
    if (dir == d) return name;
  return "?";
}

Direction parse_direction(std::string_view s) {
  for (const auto& [dir, name] : kDirections)
    if (s == name) return dir;
  throw ValidationError("unknown direction '" + std::string(s) + "'; valid values: t2v, v2t, t2a, a2t, a2v, v2a");
}

std::vector<int> default_ks(Direction d) {
  if (d == Direction::t2a || d == Direction::a2t) return {1, 5, 10, 50};
  return {1, 5, 10};
}

ModalityKind query_modality(Direction d) {
  switch (d) {
    case Direction::t2v:
    case Direction::t2a:
      return ModalityKind::text;
    case Direction::v2t:
    case Direction::v2a:
      return ModalityKind::video;
    case Direction::a2t:
    case Direction::a2v:
      return ModalityKind::audio;
  }
  return ModalityKind::text;
}

ModalityKind gallery_modality(Direction d) {
  switch (d) {
    case Direction::v2t:
    case Direction::a2t:
      return ModalityKind::text;
    case Direction::t2v:
    case Direction::a2v:
      return ModalityKind::video;
    case Direction::t2a:
    case Direction::v2a:
      return ModalityKind::audio;
  }
  return ModalityKind::video;
}

SimilarityMatrix similarity_matrix(const Matrix& queries, const Matrix& gallery, std::vector<std::string> query_ids,
                                   std::vector<std::string> gallery_ids) {
  if (queries.cols() != gallery.cols()) throw ValidationError("similarity_matrix: embedding widths differ");
  auto normalized = [](const Matrix& m, const char* what) {
    Matrix out = m;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double n = m.row(r).norm();
      if (!(n > 0.0)) throw ValidationError(std::string("similarity_matrix: zero-norm ") + what + " row " + std::to_string(r));
      out.row(r) /= n;
    }
    return out;
  };
  SimilarityMatrix s;
  s.values = normalized(queries, "query") * normalized(gallery, "gallery").transpose();
  s.query_ids = std::move(query_ids);
  s.gallery_ids = std::move(gallery_ids);
  return s;
}

double RetrievalReport::recall(int k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return recalls[i];
  throw std::out_of_range("report has no recall for k=" + std::to_string(k));
}

RetrievalReport recall_at_k(const SimilarityMatrix& sims, const std::vector<int>& ks, Direction direction) {
  const Matrix& s = sims.values;
  if (s.rows() != s.cols()) throw ValidationError("recall_at_k: similarity matrix must be square");
  if (s.rows() == 0) throw ValidationError("recall_at_k: empty similarity matrix");
  RetrievalReport r;
  r.direction = direction;
  r.ks = ks;
  r.batch = static_cast<int>(s.rows());
  r.ranks.resize(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    int rank = 1;
    for (Eigen::Index j = 0; j < s.cols(); ++j) {
      if (j != i && s(i, j) >= s(i, i)) ++rank;
    }
    r.ranks[static_cast<std::size_t>(i)] = rank;
  }
  for (int k : ks) {
    if (k < 1) throw ValidationError("recall_at_k: k must be positive");
    const auto hits = std::count_if(r.ranks.begin(), r.ranks.end(), [k](int rank) { return rank <= k; });
    r.recalls.push_back(100.0 * static_cast<double>(hits) / r.batch);
  }
  return r;
}

const char* to_string(AbsentModality a) { return a == AbsentModality::joint ? "joint" : "zero"; }

AbsentModality parse_absent_modality(std::string_view s) {
  if (s == "joint") return AbsentModality::joint;
  if (s == "zero") return AbsentModality::zero;
  throw ValidationError("absent-modality policy must be 'joint' or 'zero', got '" + std::string(s) + "'");
}

const Matrix& EmbeddingTable::of(ModalityKind m) const {
  switch (m) {
    case ModalityKind::video:
      return video;
    case ModalityKind::text:
      return text;
    case ModalityKind::audio:
      return audio;
  }
  return video;
}

EmbeddingTable embed_dataset(const Model& model, const Dataset& data, const EvalOptions& opts,
                             ModalitySet zero_content) {
  if (data.samples.empty()) throw ValidationError("evaluation dataset is empty");
  if (!(data.config == model.config.data))
    throw ValidationError("dataset configuration does not match the checkpoint's data configuration");
  const auto n = static_cast<Eigen::Index>(data.samples.size());
  const int d = model.config.encoder.dim;
  EmbeddingTable table;
  table.video.resize(n, d);
  table.text.resize(n, d);
  table.audio.resize(n, d);
  for (const auto& t : data.samples) table.ids.push_back(t.id);
  ForwardOptions fo;
  fo.joint = opts.joint;
  fo.zero_content = zero_content;
  parallel_for(data.samples.size(), opts.threads, [&](std::size_t i) {
    const GlobalRows g = embed_globals(model, data.samples[i], fo);
    const auto r = static_cast<Eigen::Index>(i);
    table.video.row(r) = g.video;
    table.text.row(r) = g.text;
    table.audio.row(r) = g.audio;
  });
  return table;
}

RetrievalReport evaluate(const Model& model, const Dataset& data, Direction direction, std::vector<int> ks,
                         const EvalOptions& opts) {
  if (ks.empty()) ks = default_ks(direction);
  const ModalityKind q = query_modality(direction), g = gallery_modality(direction);
  ModalitySet zero = ModalitySet::none();
  if (opts.absent == AbsentModality::zero) {
    for (auto m : {ModalityKind::video, ModalityKind::text, ModalityKind::audio})
      if (m != q && m != g) zero = zero.with(m);
  }
  const EmbeddingTable table = embed_dataset(model, data, opts, zero);
  return recall_at_k(similarity_matrix(table.of(q), table.of(g), table.ids, table.ids), ks, direction);
}

nlohmann::json to_json(const RetrievalReport& r, const std::string& checkpoint_id, std::uint64_t seed) {
  nlohmann::json recalls = nlohmann::json::object();
  for (std::size_t i = 0; i < r.ks.size(); ++i) recalls["R@" + std::to_string(r.ks[i])] = r.recalls[i];
  return nlohmann::json{{"direction", to_string(r.direction)},
                        {"ks", r.ks},
                        {"recalls", recalls},
                        {"B", r.batch},
                        {"checkpoint", checkpoint_id},
                        {"seed", seed}};
}

}  // namespace vlsa
