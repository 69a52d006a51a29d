#include "emobench/metrics.hpp"

#include <stdexcept>

namespace emobench {
namespace {

constexpr std::array<std::string_view, 2> kScoringNames = {"strict", "exclude"};
constexpr std::array<std::string_view, 2> kAveragingNames = {"macro", "weighted"};
constexpr std::array<std::string_view, 3> kDeltaNames = {"model-family", "prompt-pair", "grouping-pair"};

template <std::size_t N>
std::optional<std::size_t> index_in(const std::array<std::string_view, N>& names, std::string_view name) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == name) return i;
  }
  return std::nullopt;
}

std::uint64_t support(const ConfusionMatrix& m, std::size_t c, ScoringMode mode) {
  return m.row_sum(c) + (mode == ScoringMode::strict ? m.row_failures(c) : 0);
}

double average(const std::vector<PerClass>& pcs, double PerClass::*field, Averaging avg) {
  double sum = 0;
  double weight = 0;
  for (const auto& pc : pcs) {
    if (avg == Averaging::macro) {
      // Classes absent from both gold and predictions carry no information.
      if (pc.support == 0 && pc.predicted == 0) continue;
      sum += pc.*field;
      weight += 1;
    } else {
      sum += pc.*field * static_cast<double>(pc.support);
      weight += static_cast<double>(pc.support);
    }
  }
  if (weight == 0) throw std::domain_error("metric undefined on an empty confusion matrix");
  return sum / weight;
}

MetricSet combine(const MetricSet& a, const MetricSet& b, double sign_b) {
  MetricSet d;
  d.accuracy = a.accuracy + sign_b * b.accuracy;
  d.recall = a.recall + sign_b * b.recall;
  d.precision = a.precision + sign_b * b.precision;
  d.f_score = a.f_score + sign_b * b.f_score;
  d.failure_rate = a.failure_rate + sign_b * b.failure_rate;
  d.averaging = a.averaging;
  return d;
}

MetricSet mean(std::span<const MetricSet> sets) {
  MetricSet m;
  m.averaging = sets.front().averaging;
  for (const auto& s : sets) {
    if (s.averaging != m.averaging) throw std::invalid_argument("delta operands mix averaging modes");
    m = combine(m, s, 1.0);
  }
  const double n = static_cast<double>(sets.size());
  m.accuracy /= n;
  m.recall /= n;
  m.precision /= n;
  m.f_score /= n;
  m.failure_rate /= n;
  return m;
}

}  // namespace

std::size_t failure_index(OutcomeKind kind) {
  if (kind == OutcomeKind::parsed) throw std::invalid_argument("parsed is not a failure kind");
  return static_cast<std::size_t>(kind) - 1;
}

OutcomeKind failure_kind(std::size_t index) { return static_cast<OutcomeKind>(index + 1); }

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)), cells_(classes_.size() * classes_.size(), 0), failures_(classes_.size()) {}

void ConfusionMatrix::add_failure(std::size_t gold, OutcomeKind kind, std::uint64_t n) {
  failures_[gold][failure_index(kind)] += n;
}

std::uint64_t ConfusionMatrix::row_failures(std::size_t gold) const {
  std::uint64_t n = 0;
  for (const auto v : failures_[gold]) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::failures(OutcomeKind kind) const {
  const auto idx = failure_index(kind);
  std::uint64_t n = 0;
  for (const auto& row : failures_) n += row[idx];
  return n;
}

std::uint64_t ConfusionMatrix::total_failures() const {
  std::uint64_t n = 0;
  for (std::size_t g = 0; g < k(); ++g) n += row_failures(g);
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t c = 0; c < k(); ++c) n += at(c, c);
  return n;
}

std::uint64_t ConfusionMatrix::mass() const {
  std::uint64_t n = 0;
  for (const auto v : cells_) n += v;
  return n;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t gold) const {
  std::uint64_t n = 0;
  for (std::size_t p = 0; p < k(); ++p) n += at(gold, p);
  return n;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t n = 0;
  for (std::size_t g = 0; g < k(); ++g) n += at(g, predicted);
  return n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("cannot merge matrices over different classes");
  for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += other.cells_[i];
  for (std::size_t g = 0; g < failures_.size(); ++g) {
    for (std::size_t f = 0; f < kFailureKinds; ++f) failures_[g][f] += other.failures_[g][f];
  }
}

void accumulate(ConfusionMatrix& matrix, std::string_view gold, const ParseOutcome& outcome) {
  const auto& classes = matrix.classes();
  auto find = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == name) return i;
    }
    throw std::logic_error("class '" + std::string(name) + "' is not in the confusion matrix");
  };
  const auto g = find(gold);
  if (outcome.kind == OutcomeKind::parsed) {
    matrix.add(g, find(outcome.value));
  } else {
    matrix.add_failure(g, outcome.kind);
  }
}

std::string_view scoring_mode_name(ScoringMode m) { return kScoringNames[static_cast<std::size_t>(m)]; }
std::optional<ScoringMode> scoring_mode_from_name(std::string_view name) {
  if (auto i = index_in(kScoringNames, name)) return static_cast<ScoringMode>(*i);
  return std::nullopt;
}
std::string_view averaging_name(Averaging a) { return kAveragingNames[static_cast<std::size_t>(a)]; }
std::optional<Averaging> averaging_from_name(std::string_view name) {
  if (auto i = index_in(kAveragingNames, name)) return static_cast<Averaging>(*i);
  return std::nullopt;
}
std::string_view delta_kind_name(DeltaKind k) { return kDeltaNames[static_cast<std::size_t>(k)]; }
std::optional<DeltaKind> delta_kind_from_name(std::string_view name) {
  if (auto i = index_in(kDeltaNames, name)) return static_cast<DeltaKind>(*i);
  return std::nullopt;
}

std::vector<PerClass> per_class(const ConfusionMatrix& m, ScoringMode mode) {
  std::vector<PerClass> out(m.k());
  for (std::size_t c = 0; c < m.k(); ++c) {
    auto& pc = out[c];
    const auto tp = static_cast<double>(m.at(c, c));
    pc.support = support(m, c, mode);
    pc.predicted = m.column_sum(c);
    pc.recall = pc.support == 0 ? 0.0 : tp / static_cast<double>(pc.support);
    pc.precision = pc.predicted == 0 ? 0.0 : tp / static_cast<double>(pc.predicted);
    const double pr = pc.precision + pc.recall;
    pc.f_score = pr == 0 ? 0.0 : 2 * pc.precision * pc.recall / pr;
  }
  return out;
}

double accuracy(const ConfusionMatrix& m, ScoringMode mode) {
  const auto denom = m.mass() + (mode == ScoringMode::strict ? m.total_failures() : 0);
  if (denom == 0) throw std::domain_error("accuracy undefined on an empty confusion matrix");
  return static_cast<double>(m.trace()) / static_cast<double>(denom);
}

double recall(const ConfusionMatrix& m, Averaging avg, ScoringMode mode) {
  return average(per_class(m, mode), &PerClass::recall, avg);
}

double precision(const ConfusionMatrix& m, Averaging avg, ScoringMode mode) {
  return average(per_class(m, mode), &PerClass::precision, avg);
}

double f_score(const ConfusionMatrix& m, Averaging avg, ScoringMode mode) {
  return average(per_class(m, mode), &PerClass::f_score, avg);
}

MetricSet compute_metrics(const ConfusionMatrix& m, Averaging avg, ScoringMode mode) {
  const auto pcs = per_class(m, mode);
  MetricSet s;
  s.accuracy = accuracy(m, mode);
  s.recall = average(pcs, &PerClass::recall, avg);
  s.precision = average(pcs, &PerClass::precision, avg);
  s.f_score = average(pcs, &PerClass::f_score, avg);
  s.averaging = avg;
  const auto fails = m.total_failures();
  const auto all = m.mass() + fails;
  s.failure_rate = all == 0 ? 0.0 : static_cast<double>(fails) / static_cast<double>(all);
  return s;
}

DeltaReport delta_models(std::span<const MetricSet> llm, std::span<const MetricSet> pre) {
  if (llm.empty() || pre.empty()) throw std::domain_error("model-family delta needs models on both sides");
  const auto a = mean(llm);
  const auto b = mean(pre);
  if (a.averaging != b.averaging) throw std::invalid_argument("delta operands mix averaging modes");
  return DeltaReport{DeltaKind::model_family, "llm[" + std::to_string(llm.size()) + "]",
                     "pre[" + std::to_string(pre.size()) + "]", combine(a, b, -1.0)};
}

DeltaReport delta_prompts(const std::map<PromptStrategy, MetricSet>& metrics, PromptStrategy i, PromptStrategy j) {
  if (i == j) throw std::domain_error("prompt-pair delta needs two different strategies");
  const auto a = metrics.find(i);
  const auto b = metrics.find(j);
  if (a == metrics.end() || b == metrics.end()) {
    throw std::domain_error("prompt-pair delta: strategy '" +
                            std::string(strategy_name(a == metrics.end() ? i : j)) + "' has no metrics");
  }
  if (a->second.averaging != b->second.averaging) throw std::invalid_argument("delta operands mix averaging modes");
  return DeltaReport{DeltaKind::prompt_pair, std::string(strategy_name(i)), std::string(strategy_name(j)),
                     combine(a->second, b->second, -1.0)};
}

DeltaReport delta_groupings(const MetricSet& fine, std::size_t k, const MetricSet& coarse, std::size_t k_coarse) {
  if (k <= k_coarse) throw std::domain_error("grouping-pair delta needs the fine scheme to have more classes");
  if (fine.averaging != coarse.averaging) throw std::invalid_argument("delta operands mix averaging modes");
  return DeltaReport{DeltaKind::grouping_pair, "k=" + std::to_string(k_coarse), "k=" + std::to_string(k),
                     combine(coarse, fine, -1.0)};
}

ConfusionMatrix group_matrix(const ConfusionMatrix& matrix, const GroupingScheme& scheme) {
  if (matrix.k() != kEmotionCount) throw std::invalid_argument("group_matrix expects a six-class matrix");
  for (const auto e : canonical_labels()) {
    if (matrix.classes()[label_id(e)] != label_name(e)) {
      throw std::invalid_argument("group_matrix expects the canonical label order");
    }
  }
  ConfusionMatrix out(scheme.class_names());
  for (const auto g : canonical_labels()) {
    const auto gc = scheme.class_of(g);
    if (!gc) continue;
    const auto gi = label_id(g);
    for (const auto p : canonical_labels()) {
      const auto n = matrix.at(gi, label_id(p));
      if (n == 0) continue;
      if (auto pc = scheme.class_of(p)) {
        out.add(*gc, *pc, n);
      } else {
        out.add_failure(*gc, OutcomeKind::out_of_vocabulary, n);
      }
    }
    for (std::size_t f = 0; f < kFailureKinds; ++f) {
      if (const auto n = matrix.failure_row(gi)[f]) out.add_failure(*gc, failure_kind(f), n);
    }
  }
  return out;
}

}  // namespace emobench
