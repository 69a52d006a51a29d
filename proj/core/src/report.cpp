#include "emobench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "emobench/errors.hpp"

namespace emobench {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::size_t strategy_rank(PromptStrategy s) { return static_cast<std::size_t>(s); }

std::string context_of(std::initializer_list<std::pair<std::string_view, std::string>> parts) {
  std::string out;
  for (const auto& [k, v] : parts) {
    if (!out.empty()) out += ';';
    out += std::string(k) + "=" + v;
  }
  return out;
}

const CellResult* find_cell(const RunRecord& r, const std::string& backend, PromptStrategy s, int k) {
  for (const auto& c : r.cells) {
    if (c.key.backend == backend && c.key.strategy == s && c.key.k == k && c.metrics) return &c;
  }
  return nullptr;
}

std::vector<std::string> backend_order(const RunRecord& r) {
  std::vector<std::string> out;
  for (const auto& c : r.cells) {
    if (std::find(out.begin(), out.end(), c.key.backend) == out.end()) out.push_back(c.key.backend);
  }
  return out;
}

std::set<PromptStrategy> strategies_of(const RunRecord& r) {
  std::set<PromptStrategy> out;
  for (const auto& c : r.cells) {
    if (c.metrics) out.insert(c.key.strategy);
  }
  return out;
}

std::set<int> schemes_of(const RunRecord& r) {
  std::set<int> out;
  for (const auto& c : r.cells) {
    if (c.metrics) out.insert(c.key.k);
  }
  return out;
}

json metric_strings(const MetricSet& m) {
  return {{"accuracy", percent(m.accuracy)},   {"recall", percent(m.recall)},
          {"precision", percent(m.precision)}, {"f_score", percent(m.f_score)},
          {"failure_rate", percent(m.failure_rate)}};
}

json metric_raw(const MetricSet& m) {
  return {{"accuracy", m.accuracy},   {"recall", m.recall},         {"precision", m.precision},
          {"f_score", m.f_score},     {"failure_rate", m.failure_rate}};
}

MetricSet negate(MetricSet m) {
  m.accuracy = -m.accuracy;
  m.recall = -m.recall;
  m.precision = -m.precision;
  m.f_score = -m.f_score;
  m.failure_rate = -m.failure_rate;
  return m;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_file(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::vector<DeltaRow> model_family_deltas(const RunRecord& a, const std::string& a_name,
                                          const std::vector<std::string>& a_backends, const RunRecord& b,
                                          const std::string& b_name, const std::vector<std::string>& b_backends) {
  std::vector<DeltaRow> rows;
  for (const auto s : all_strategies()) {
    std::set<int> ks;
    for (const auto& c : a.cells) if (c.key.strategy == s) ks.insert(c.key.k);
    for (const int k : ks) {
      std::vector<MetricSet> lhs, rhs;
      for (const auto& name : a_backends) {
        if (const auto* c = find_cell(a, name, s, k)) lhs.push_back(*c->metrics);
      }
      for (const auto& name : b_backends) {
        if (const auto* c = find_cell(b, name, s, k)) rhs.push_back(*c->metrics);
      }
      if (lhs.empty() || rhs.empty()) continue;
      auto rep = delta_models(lhs, rhs);
      rep.lhs = a_name + "[" + std::to_string(lhs.size()) + "]";
      rep.rhs = b_name + "[" + std::to_string(rhs.size()) + "]";
      rows.push_back({std::move(rep), context_of({{"strategy", std::string(strategy_name(s))}, {"k", std::to_string(k)}})});
    }
  }
  return rows;
}

}  // namespace

std::string percent(double v) {
  char buf[32];
  double scaled = v * 100.0;
  // Keep "-0.00" out of the tables.
  if (std::fabs(scaled) < 0.005) scaled = 0.0;
  std::snprintf(buf, sizeof buf, "%.2f", scaled);
  return buf;
}

std::vector<SchemeEntropy> scheme_entropies(const RunRecord& record) {
  std::vector<SchemeEntropy> out;
  if (record.eval_histogram.total() == 0) return out;
  for (const auto& [k, scheme] : record.schemes) {
    auto dist = induced_distribution(scheme, record.eval_histogram);
    if (dist.total() == 0) continue;
    const double bits = entropy(dist);
    out.push_back({k, std::move(dist), bits});
  }
  std::sort(out.begin(), out.end(), [](const SchemeEntropy& x, const SchemeEntropy& y) { return x.k > y.k; });
  return out;
}

std::vector<DeltaRow> run_deltas(const RunRecord& record, DeltaKind kind) {
  std::vector<DeltaRow> rows;
  const auto backends = backend_order(record);
  switch (kind) {
    case DeltaKind::prompt_pair:
      for (const auto& b : backends) {
        const auto ks = schemes_of(record);
        for (auto kit = ks.rbegin(); kit != ks.rend(); ++kit) {
          const int k = *kit;
          std::map<PromptStrategy, MetricSet> metrics;
          for (const auto s : all_strategies()) {
            if (const auto* c = find_cell(record, b, s, k)) metrics.emplace(s, *c->metrics);
          }
          for (auto i = metrics.begin(); i != metrics.end(); ++i) {
            for (auto j = std::next(i); j != metrics.end(); ++j) {
              rows.push_back({delta_prompts(metrics, i->first, j->first),
                              context_of({{"backend", b}, {"k", std::to_string(k)}})});
            }
          }
        }
      }
      break;
    case DeltaKind::grouping_pair:
      for (const auto& b : backends) {
        for (const auto s : all_strategies()) {
          std::vector<const CellResult*> cells;
          for (auto it = record.schemes.rbegin(); it != record.schemes.rend(); ++it) {
            if (const auto* c = find_cell(record, b, s, it->first)) cells.push_back(c);
          }
          for (std::size_t i = 0; i < cells.size(); ++i) {
            for (std::size_t j = i + 1; j < cells.size(); ++j) {
              rows.push_back({delta_groupings(*cells[i]->metrics, static_cast<std::size_t>(cells[i]->key.k),
                                              *cells[j]->metrics, static_cast<std::size_t>(cells[j]->key.k)),
                              context_of({{"backend", b}, {"strategy", std::string(strategy_name(s))}})});
            }
          }
        }
      }
      break;
    case DeltaKind::model_family: {
      std::map<std::string, std::vector<std::string>> families;
      for (const auto& b : backends) {
        const auto it = record.families.find(b);
        families[it == record.families.end() ? "llm" : it->second].push_back(b);
      }
      for (auto i = families.begin(); i != families.end(); ++i) {
        for (auto j = std::next(i); j != families.end(); ++j) {
          auto part = model_family_deltas(record, i->first, i->second, record, j->first, j->second);
          rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
        }
      }
      break;
    }
  }
  return rows;
}

std::vector<DeltaRow> compare_runs(const RunRecord& a, const RunRecord& b, DeltaKind kind) {
  if (a.averaging != b.averaging) throw ConfigError("runs use different averaging modes");
  std::vector<DeltaRow> rows;
  switch (kind) {
    case DeltaKind::model_family:
      rows = model_family_deltas(a, "a", backend_order(a), b, "b", backend_order(b));
      break;
    case DeltaKind::prompt_pair: {
      const auto sa = strategies_of(a);
      const auto sb = strategies_of(b);
      if (sa.size() != 1 || sb.size() != 1 || *sa.begin() == *sb.begin()) {
        throw ConfigError("prompt-pair comparison needs one strategy per run, different between the runs");
      }
      const auto i = *sa.begin();
      const auto j = *sb.begin();
      for (const auto& backend : backend_order(a)) {
        for (const int k : schemes_of(a)) {
          const auto* ca = find_cell(a, backend, i, k);
          const auto* cb = find_cell(b, backend, j, k);
          if (!ca || !cb) continue;
          rows.push_back({delta_prompts({{i, *ca->metrics}, {j, *cb->metrics}}, i, j),
                          context_of({{"backend", backend}, {"k", std::to_string(k)}})});
        }
      }
      break;
    }
    case DeltaKind::grouping_pair: {
      const auto ka = schemes_of(a);
      const auto kb = schemes_of(b);
      if (ka.size() != 1 || kb.size() != 1 || *ka.begin() == *kb.begin()) {
        throw ConfigError("grouping-pair comparison needs one scheme per run, different between the runs");
      }
      const int k_a = *ka.begin();
      const int k_b = *kb.begin();
      for (const auto& backend : backend_order(a)) {
        for (const auto s : all_strategies()) {
          const auto* ca = find_cell(a, backend, s, k_a);
          const auto* cb = find_cell(b, backend, s, k_b);
          if (!ca || !cb) continue;
          const auto ctx = context_of({{"backend", backend}, {"strategy", std::string(strategy_name(s))}});
          if (k_a < k_b) {
            rows.push_back({delta_groupings(*cb->metrics, static_cast<std::size_t>(k_b), *ca->metrics,
                                            static_cast<std::size_t>(k_a)),
                            ctx});
          } else {
            auto rep = delta_groupings(*ca->metrics, static_cast<std::size_t>(k_a), *cb->metrics,
                                       static_cast<std::size_t>(k_b));
            rep.delta = negate(rep.delta);
            std::swap(rep.lhs, rep.rhs);
            rows.push_back({std::move(rep), ctx});
          }
        }
      }
      break;
    }
  }
  if (rows.empty()) throw ConfigError("the two runs share no comparable cells for " + std::string(delta_kind_name(kind)));
  return rows;
}

json report_json(const RunRecord& record) {
  json cells = json::array();
  for (const auto& c : record.cells) {
    json failures = json::object();
    for (std::size_t f = 0; f < kFailureKinds; ++f) {
      const auto kind = failure_kind(f);
      failures[std::string(outcome_kind_name(kind))] = c.matrix.failures(kind);
    }
    json row_failures = json::array();
    json counts = json::array();
    for (std::size_t g = 0; g < c.matrix.k(); ++g) {
      json row = json::array();
      for (std::size_t p = 0; p < c.matrix.k(); ++p) row.push_back(c.matrix.at(g, p));
      counts.push_back(row);
      row_failures.push_back(c.matrix.row_failures(g));
    }
    cells.push_back({{"backend", c.key.backend},
                     {"strategy", std::string(strategy_name(c.key.strategy))},
                     {"k", c.key.k},
                     {"status", std::string(cell_status_name(c.status))},
                     {"note", c.note},
                     {"samples", c.samples},
                     {"metrics", c.metrics ? metric_strings(*c.metrics) : json(nullptr)},
                     {"raw", c.metrics ? metric_raw(*c.metrics) : json(nullptr)},
                     {"failures", failures},
                     {"confusion", {{"classes", c.matrix.classes()}, {"counts", counts}, {"row_failures", row_failures}}}});
  }

  json deltas = json::array();
  for (const auto kind : {DeltaKind::model_family, DeltaKind::prompt_pair, DeltaKind::grouping_pair}) {
    for (const auto& row : run_deltas(record, kind)) {
      deltas.push_back({{"kind", std::string(delta_kind_name(kind))},
                        {"context", row.context},
                        {"lhs", row.report.lhs},
                        {"rhs", row.report.rhs},
                        {"delta", metric_strings(row.report.delta)},
                        {"raw", metric_raw(row.report.delta)}});
    }
  }

  json entropies = json::array();
  for (const auto& e : scheme_entropies(record)) {
    entropies.push_back({{"k", e.k},
                         {"classes", e.distribution.classes()},
                         {"counts", e.distribution.counts()},
                         {"bits", e.bits}});
  }

  return {{"fingerprint", record.fingerprint},
          {"scoring_mode", std::string(scoring_mode_name(record.scoring_mode))},
          {"averaging", std::string(averaging_name(record.averaging))},
          {"interrupted", record.interrupted},
          {"cells", cells},
          {"deltas", deltas},
          {"entropies", entropies}};
}

std::string to_json(const RunRecord& record) { return report_json(record).dump(2) + "\n"; }

std::string metrics_csv(const RunRecord& record) {
  const auto backends = backend_order(record);
  std::vector<const CellResult*> cells;
  for (const auto& c : record.cells) cells.push_back(&c);
  auto rank = [&](const std::string& b) { return std::find(backends.begin(), backends.end(), b) - backends.begin(); };
  std::stable_sort(cells.begin(), cells.end(), [&](const CellResult* x, const CellResult* y) {
    if (x->key.strategy != y->key.strategy) return strategy_rank(x->key.strategy) < strategy_rank(y->key.strategy);
    if (x->key.backend != y->key.backend) return rank(x->key.backend) < rank(y->key.backend);
    return x->key.k > y->key.k;
  });
  std::string out = "strategy,model,k,accuracy,recall,precision,f_score,failure_rate\n";
  for (const auto* c : cells) {
    out += std::string(strategy_name(c->key.strategy)) + "," + csv_field(c->key.backend) + "," + std::to_string(c->key.k);
    if (c->metrics) {
      const auto& m = *c->metrics;
      out += "," + percent(m.accuracy) + "," + percent(m.recall) + "," + percent(m.precision) + "," +
             percent(m.f_score) + "," + percent(m.failure_rate);
    } else {
      out += ",,,,,";
    }
    out += "\n";
  }
  return out;
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::string out = "gold\\predicted";
  for (const auto& c : m.classes()) out += "," + csv_field(c);
  out += ",failures\n";
  for (std::size_t g = 0; g < m.k(); ++g) {
    out += csv_field(m.classes()[g]);
    for (std::size_t p = 0; p < m.k(); ++p) out += "," + std::to_string(m.at(g, p));
    out += "," + std::to_string(m.row_failures(g)) + "\n";
  }
  return out;
}

std::string deltas_csv(const std::vector<DeltaRow>& rows) {
  std::string out = "kind,context,lhs,rhs,accuracy,recall,precision,f_score,failure_rate,averaging\n";
  for (const auto& r : rows) {
    const auto& d = r.report.delta;
    out += std::string(delta_kind_name(r.report.kind)) + "," + csv_field(r.context) + "," + csv_field(r.report.lhs) +
           "," + csv_field(r.report.rhs) + "," + percent(d.accuracy) + "," + percent(d.recall) + "," +
           percent(d.precision) + "," + percent(d.f_score) + "," + percent(d.failure_rate) + "," +
           std::string(averaging_name(d.averaging)) + "\n";
  }
  return out;
}

std::string render_confusion_svg(const ConfusionMatrix& m, const std::string& title) {
  constexpr int cell = 56;
  constexpr int left = 96;
  constexpr int top = 72;
  const int cols = static_cast<int>(m.k()) + 1;  // plus the failure column
  const int width = left + cols * cell + 16;
  const int height = top + static_cast<int>(m.k()) * cell + 40;

  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                width, height, width, height);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += "<text x=\"8\" y=\"20\" font-size=\"14\">" + xml_escape(title) + "</text>\n";

  auto column_label = [&](int col, const std::string& text) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">", left + col * cell + cell / 2, top - 8);
    out += buf + xml_escape(text) + "</text>\n";
  };
  for (std::size_t p = 0; p < m.k(); ++p) column_label(static_cast<int>(p), m.classes()[p]);
  column_label(cols - 1, "failed");

  for (std::size_t g = 0; g < m.k(); ++g) {
    const int y = top + static_cast<int>(g) * cell;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", left - 8, y + cell / 2 + 4);
    out += buf + xml_escape(m.classes()[g]) + "</text>\n";
    const auto total = m.row_sum(g) + m.row_failures(g);
    for (int col = 0; col < cols; ++col) {
      const auto count = col < static_cast<int>(m.k()) ? m.at(g, static_cast<std::size_t>(col)) : m.row_failures(g);
      const double f = total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
      const int r = 255 - static_cast<int>(std::lround(205 * f));
      const int gr = 255 - static_cast<int>(std::lround(155 * f));
      const int b = 255 - static_cast<int>(std::lround(55 * f));
      const int x = left + col * cell;
      std::snprintf(buf, sizeof buf,
                    "<rect data-gold=\"%zu\" data-pred=\"%d\" x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                    "fill=\"#%02x%02x%02x\" stroke=\"#cccccc\"/>\n",
                    g, col, x, y, cell, cell, r, gr, b);
      out += buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\" fill=\"%s\">%llu</text>\n",
                    x + cell / 2, y + cell / 2 + 4, f > 0.5 ? "#ffffff" : "#000000",
                    static_cast<unsigned long long>(count));
      out += buf;
    }
  }
  std::snprintf(buf, sizeof buf, "<text x=\"8\" y=\"%d\" fill=\"#666666\">rows: gold, columns: predicted</text>\n",
                height - 12);
  out += buf;
  out += "</svg>\n";
  return out;
}

std::optional<ReportFormat> report_format_from_name(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "svg") return ReportFormat::svg;
  if (name == "all") return ReportFormat::all;
  return std::nullopt;
}

std::string file_stem(const CellKey& key) {
  std::string backend = key.backend;
  for (auto& c : backend) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') c = '_';
  }
  return "confusion_" + backend + "_" + std::string(strategy_name(key.strategy)) + "_k" + std::to_string(key.k);
}

std::vector<fs::path> emit_report(const RunRecord& record, const fs::path& out_dir, ReportFormat format) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto put = [&](const std::string& name, std::string_view content) {
    write_file(out_dir / name, content);
    written.push_back(out_dir / name);
  };
  const bool all = format == ReportFormat::all;
  if (all || format == ReportFormat::json) put("report.json", to_json(record));
  if (all || format == ReportFormat::csv) {
    put("metrics.csv", metrics_csv(record));
    for (const auto& c : record.cells) put(file_stem(c.key) + ".csv", confusion_csv(c.matrix));
    for (const auto kind : {DeltaKind::model_family, DeltaKind::prompt_pair, DeltaKind::grouping_pair}) {
      put("deltas_" + std::string(delta_kind_name(kind)) + ".csv", deltas_csv(run_deltas(record, kind)));
    }
  }
  if (all || format == ReportFormat::svg) {
    for (const auto& c : record.cells) put(file_stem(c.key) + ".svg", render_confusion_svg(c.matrix, c.key.describe()));
  }
  return written;
}

}  // namespace emobench
