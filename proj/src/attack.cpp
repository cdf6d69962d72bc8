#include "aliasforge/attack.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "aliasforge/metrics.hpp"
#include "aliasforge/rng.hpp"

namespace aliasforge {

AttackMatrix attack_features(const TraceMatrix& tm) {
  AttackMatrix m(static_cast<Eigen::Index>(tm.size()), kAttackFeatures);
  for (std::size_t i = 0; i < tm.size(); ++i) {
    const auto& r = tm.rows[i];
    if (!(r.cycles > 0.0 && r.read_bytes > 0.0 && r.write_bytes > 0.0))
      throw AttackError("trace row " + std::to_string(i) + " has a non-positive feature");
    const double lc = std::log(r.cycles);
    const double lr = std::log(r.read_bytes);
    const double lw = std::log(r.write_bytes);
    m.row(static_cast<Eigen::Index>(i)) << lc, lr, lw, lr - lw, lc - lr;
  }
  return m;
}

TraceDataset build_dataset(std::span<const ModelGraph> corpus, const TraceParams& params,
                           std::string provenance) {
  if (corpus.empty()) throw AttackError("build_dataset: empty corpus");
  std::vector<AttackMatrix> blocks;
  TraceDataset ds;
  ds.provenance = std::move(provenance);
  Eigen::Index rows = 0;
  for (const auto& g : corpus) {
    const TraceMatrix tm = trace(g.shapes_annotated() ? g : infer_shapes(g), params);
    blocks.push_back(attack_features(tm));
    rows += blocks.back().rows();
    for (const auto& r : tm.rows) ds.labels.push_back(r.label);
  }
  if (rows == 0) throw AttackError("build_dataset: corpus has no kernels");
  ds.features.resize(rows, kAttackFeatures);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    ds.features.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  ds.mean = ds.features.colwise().mean();
  const AttackMatrix centered = ds.features.rowwise() - ds.mean;
  ds.scale = (centered.array().square().colwise().sum() / static_cast<double>(rows)).sqrt();
  for (int k = 0; k < kAttackFeatures; ++k)
    if (!(ds.scale(k) > 1e-12)) ds.scale(k) = 1.0;
  ds.features = centered.array().rowwise() / ds.scale.array();
  return ds;
}

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::NearestCentroid: return "NearestCentroid";
    case PredictorKind::GaussianNB: return "GaussianNB";
    case PredictorKind::KNN: return "KNN";
  }
  return "?";
}

PredictorKind parse_predictor_kind(std::string_view name) {
  // Case and '-' / '_' are ignored: "knn", "nearest-centroid", "GaussianNB".
  auto fold = [](std::string_view s) {
    std::string out;
    for (char ch : s)
      if (ch != '-' && ch != '_') out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  for (auto k : {PredictorKind::NearestCentroid, PredictorKind::GaussianNB, PredictorKind::KNN})
    if (fold(to_string(k)) == fold(name)) return k;
  throw AttackError("unknown predictor kind \"" + std::string(name) + "\"");
}

namespace {

bool row_less(const AttackRow& a, const AttackRow& b) {
  return std::lexicographical_compare(a.data(), a.data() + kAttackFeatures, b.data(),
                                      b.data() + kAttackFeatures);
}

// Rows of one class in lexicographic order, so class statistics do not depend
// on sample order.
std::vector<AttackRow> sorted_rows(const TraceDataset& ds, LayerKind label) {
  std::vector<AttackRow> rows;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == label) rows.push_back(ds.features.row(static_cast<Eigen::Index>(i)));
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

}  // namespace

AttackPredictor AttackPredictor::train(const TraceDataset& ds, PredictorKind kind, int k) {
  std::vector<LayerKind> classes(ds.labels.begin(), ds.labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw AttackError("train: dataset needs at least 2 classes");
  if (kind == PredictorKind::KNN && k < 1) throw AttackError("train: KNN needs k >= 1");

  AttackPredictor p;
  p.kind_ = kind;
  p.k_ = k;
  p.mean_ = ds.mean;
  p.scale_ = ds.scale;
  p.classes_ = classes;
  const auto n_classes = static_cast<Eigen::Index>(classes.size());
  p.means_.setZero(n_classes, kAttackFeatures);
  p.variances_.setZero(n_classes, kAttackFeatures);
  p.log_priors_.setZero(n_classes);

  std::vector<std::pair<AttackRow, int>> exemplars;
  for (Eigen::Index c = 0; c < n_classes; ++c) {
    const auto rows = sorted_rows(ds, classes[static_cast<std::size_t>(c)]);
    AttackRow sum = AttackRow::Zero();
    for (const auto& r : rows) sum += r;
    const AttackRow mean = sum / static_cast<double>(rows.size());
    AttackRow var = AttackRow::Zero();
    for (const auto& r : rows) var += (r - mean).array().square().matrix();
    var /= static_cast<double>(rows.size());
    p.means_.row(c) = mean;
    p.variances_.row(c) = (var.array() + 1e-6).matrix();
    p.log_priors_(c) = std::log(static_cast<double>(rows.size()) / static_cast<double>(ds.size()));
    if (kind == PredictorKind::KNN)
      for (const auto& r : rows) exemplars.emplace_back(r, static_cast<int>(c));
  }
  if (kind == PredictorKind::KNN) {
    p.exemplars_.resize(static_cast<Eigen::Index>(exemplars.size()), kAttackFeatures);
    for (std::size_t i = 0; i < exemplars.size(); ++i) {
      p.exemplars_.row(static_cast<Eigen::Index>(i)) = exemplars[i].first;
      p.exemplar_class_.push_back(exemplars[i].second);
    }
  }
  return p;
}

LayerKind AttackPredictor::classify_row(const AttackRow& x) const {
  const auto n_classes = static_cast<Eigen::Index>(classes_.size());
  switch (kind_) {
    case PredictorKind::NearestCentroid: {
      Eigen::Index best = 0;
      (means_.rowwise() - x).rowwise().squaredNorm().minCoeff(&best);
      return classes_[static_cast<std::size_t>(best)];
    }
    case PredictorKind::GaussianNB: {
      Eigen::VectorXd score(n_classes);
      for (Eigen::Index c = 0; c < n_classes; ++c) {
        const auto var = variances_.row(c).array();
        score(c) = log_priors_(c) - 0.5 * (var.log().sum() +
                                           ((x - means_.row(c)).array().square() / var).sum());
      }
      Eigen::Index best = 0;
      score.maxCoeff(&best);
      return classes_[static_cast<std::size_t>(best)];
    }
    case PredictorKind::KNN: {
      const Eigen::VectorXd d = (exemplars_.rowwise() - x).rowwise().squaredNorm();
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(d.size()));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k_), idx.size());
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          return d(a) != d(b) ? d(a) < d(b) : a < b;
                        });
      // Majority vote; ties go to the class whose nearest member is closest.
      std::map<int, std::pair<int, double>> votes;
      for (std::size_t i = 0; i < kk; ++i) {
        auto& v = votes.try_emplace(exemplar_class_[static_cast<std::size_t>(idx[i])], 0,
                                    d(idx[i]))
                      .first->second;
        ++v.first;
      }
      int best_class = -1;
      std::pair<int, double> best_vote{-1, 0.0};
      for (const auto& [cls, v] : votes)
        if (v.first > best_vote.first || (v.first == best_vote.first && v.second < best_vote.second)) {
          best_vote = v;
          best_class = cls;
        }
      return classes_[static_cast<std::size_t>(best_class)];
    }
  }
  throw AttackError("unknown predictor kind");
}

std::vector<LayerKind> AttackPredictor::classify(const AttackMatrix& normalized) const {
  std::vector<LayerKind> out;
  out.reserve(static_cast<std::size_t>(normalized.rows()));
  for (Eigen::Index i = 0; i < normalized.rows(); ++i) out.push_back(classify_row(normalized.row(i)));
  return out;
}

LayerSequence AttackPredictor::predict_sequence(const TraceMatrix& tm) const {
  if (classes_.empty()) throw AttackError("predict_sequence: predictor is not trained");
  if (tm.empty()) return {};
  const AttackMatrix raw = attack_features(tm);
  const AttackMatrix normalized = (raw.rowwise() - mean_).array().rowwise() / scale_.array();
  return classify(normalized);
}

namespace {

std::vector<double> row_vec(const auto& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Eigen::RowVectorXd r = m.row(i);
    rows.push_back(row_vec(r));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& rows, Eigen::Index cols, const char* what) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != cols)
      throw AttackError(std::string("predictor document: ") + what + " row " + std::to_string(i) +
                        " has " + std::to_string(v.size()) + " features, expected " +
                        std::to_string(cols));
    for (Eigen::Index k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = v[static_cast<std::size_t>(k)];
  }
  return m;
}

AttackRow feature_row(const nlohmann::json& j, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kAttackFeatures)
    throw AttackError(std::string("predictor document: ") + what + " has " +
                      std::to_string(v.size()) + " features, expected " +
                      std::to_string(kAttackFeatures));
  AttackRow r;
  for (int k = 0; k < kAttackFeatures; ++k) r(k) = v[static_cast<std::size_t>(k)];
  return r;
}

}  // namespace

nlohmann::json AttackPredictor::to_json() const {
  std::vector<std::string> classes;
  for (auto c : classes_) classes.emplace_back(to_string(c));
  nlohmann::json doc = {
      {"kind", to_string(kind_)},
      {"features", kAttackFeatures},
      {"feature_mean", row_vec(mean_)},
      {"feature_scale", row_vec(scale_)},
      {"classes", classes},
      {"class_means", matrix_json(means_)},
      {"class_variances", matrix_json(variances_)},
      {"log_priors", row_vec(log_priors_)},
  };
  if (kind_ == PredictorKind::KNN) {
    doc["k"] = k_;
    doc["exemplars"] = matrix_json(exemplars_);
    doc["exemplar_class"] = exemplar_class_;
  }
  return doc;
}

AttackPredictor AttackPredictor::from_json(const nlohmann::json& doc) {
  AttackPredictor p;
  try {
    p.kind_ = parse_predictor_kind(doc.at("kind").get<std::string>());
    if (doc.at("features").get<int>() != kAttackFeatures)
      throw AttackError("predictor document: feature dimension " +
                        std::to_string(doc.at("features").get<int>()) + " != " +
                        std::to_string(kAttackFeatures));
    p.mean_ = feature_row(doc.at("feature_mean"), "feature_mean");
    p.scale_ = feature_row(doc.at("feature_scale"), "feature_scale");
    for (const auto& name : doc.at("classes")) {
      const auto kind = parse_layer_kind(name.get<std::string>());
      if (!kind) throw AttackError("predictor document: unknown class " + name.get<std::string>());
      p.classes_.push_back(*kind);
    }
    p.means_ = matrix_from(doc.at("class_means"), kAttackFeatures, "class_means");
    p.variances_ = matrix_from(doc.at("class_variances"), kAttackFeatures, "class_variances");
    const auto priors = doc.at("log_priors").get<std::vector<double>>();
    p.log_priors_ = Eigen::Map<const Eigen::VectorXd>(priors.data(), static_cast<Eigen::Index>(priors.size()));
    const auto n = static_cast<Eigen::Index>(p.classes_.size());
    if (n < 2 || p.means_.rows() != n || p.variances_.rows() != n || p.log_priors_.size() != n)
      throw AttackError("predictor document: class tables disagree in size");
    if (p.kind_ == PredictorKind::KNN) {
      p.k_ = doc.at("k").get<int>();
      p.exemplars_ = matrix_from(doc.at("exemplars"), kAttackFeatures, "exemplars");
      p.exemplar_class_ = doc.at("exemplar_class").get<std::vector<int>>();
      if (static_cast<Eigen::Index>(p.exemplar_class_.size()) != p.exemplars_.rows())
        throw AttackError("predictor document: exemplar labels disagree with exemplars");
    }
  } catch (const nlohmann::json::exception& e) {
    throw AttackError(std::string("malformed predictor document: ") + e.what());
  }
  return p;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_graph(std::size_t n_graphs,
                                                                             std::uint64_t seed,
                                                                             double train_fraction) {
  std::vector<std::size_t> idx(n_graphs);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "attack-split"));
  for (std::size_t i = n_graphs; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n_graphs)));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

DefenseReport evaluate_defense(const ModelGraph& base_in, const Genome& genome,
                               const AttackPredictor& predictor, const TraceParams& params) {
  const ModelGraph base = infer_shapes(strip_weights(base_in));
  const ModelGraph obf = apply_genome(base, genome);
  const TraceMatrix base_trace = trace(base, params);
  const TraceMatrix obf_trace = trace(obf, params);

  DefenseReport r;
  r.model = base.name;
  r.original = to_sequence(base, params.sequence);
  r.obfuscated = to_sequence(obf, params.sequence);
  r.extracted_org = predictor.predict_sequence(strip_labels(base_trace));
  r.extracted_obf = predictor.predict_sequence(strip_labels(obf_trace));
  r.ler_extracted_org = ler(r.extracted_org, r.original);
  r.ler_extracted_obf = ler(r.extracted_obf, r.original);
  r.ler_obfuscated = ler(r.obfuscated, r.original);
  r.baseline_latency = total_latency(base_trace, params);
  r.latency = total_latency(obf_trace, params);
  r.latency_ratio = r.latency / r.baseline_latency;
  return r;
}

namespace {

nlohmann::json seq_json(const LayerSequence& s) {
  nlohmann::json a = nlohmann::json::array();
  for (auto k : s) a.push_back(to_string(k));
  return a;
}

}  // namespace

nlohmann::json DefenseReport::to_json() const {
  return {
      {"model", model},
      {"ler_extracted_org", ler_extracted_org},
      {"ler_extracted_obf", ler_extracted_obf},
      {"ler_obfuscated", ler_obfuscated},
      {"baseline_latency", baseline_latency},
      {"latency", latency},
      {"latency_ratio", latency_ratio},
      {"original", seq_json(original)},
      {"obfuscated", seq_json(obfuscated)},
      {"extracted_org", seq_json(extracted_org)},
      {"extracted_obf", seq_json(extracted_obf)},
  };
}

DefenseReport DefenseReport::from_json(const nlohmann::json& doc) {
  auto seq = [&](const char* key) {
    LayerSequence out;
    for (const auto& v : doc.at(key)) {
      const auto kind = parse_layer_kind(v.get<std::string>());
      if (!kind) throw AttackError(std::string("report: unknown layer kind in ") + key);
      out.push_back(*kind);
    }
    return out;
  };
  try {
    DefenseReport r;
    r.model = doc.at("model").get<std::string>();
    r.ler_extracted_org = doc.at("ler_extracted_org").get<double>();
    r.ler_extracted_obf = doc.at("ler_extracted_obf").get<double>();
    r.ler_obfuscated = doc.at("ler_obfuscated").get<double>();
    r.baseline_latency = doc.at("baseline_latency").get<double>();
    r.latency = doc.at("latency").get<double>();
    r.latency_ratio = doc.at("latency_ratio").get<double>();
    r.original = seq("original");
    r.obfuscated = seq("obfuscated");
    r.extracted_org = seq("extracted_org");
    r.extracted_obf = seq("extracted_obf");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw AttackError(std::string("report: ") + e.what());
  }
}

std::string DefenseReport::table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "model                        " << model << '\n'
     << "kernels original/obfuscated  " << original.size() << " / " << obfuscated.size() << '\n'
     << "LER(extracted_org, original) " << ler_extracted_org << '\n'
     << "LER(extracted_obf, original) " << ler_extracted_obf << '\n'
     << "LER(obfuscated, original)    " << ler_obfuscated << '\n'
     << "latency ratio T/T*           " << latency_ratio << '\n';
  return os.str();
}

}  // namespace aliasforge
