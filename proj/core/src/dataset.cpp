#include "emobench/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "emobench/errors.hpp"
#include "emobench/hashing.hpp"

namespace emobench {
namespace {

struct Record {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// RFC 4180 reader. Blank lines are skipped; CRLF and LF both end a record.
std::vector<Record> read_records(std::string_view in) {
  if (in.starts_with("\xEF\xBB\xBF")) in.remove_prefix(3);

  std::vector<Record> records;
  std::size_t line = 1;
  std::size_t i = 0;
  const std::size_t n = in.size();

  while (i < n) {
    Record rec;
    rec.line = line;
    std::string field;
    bool any_content = false;

    for (;;) {
      if (i < n && in[i] == '"') {
        any_content = true;
        ++i;
        for (;;) {
          if (i >= n) throw DatasetError("unterminated quoted field starting at line " + std::to_string(rec.line));
          const char c = in[i++];
          if (c == '"') {
            if (i < n && in[i] == '"') {
              field.push_back('"');
              ++i;
              continue;
            }
            break;
          }
          if (c == '\n') ++line;
          field.push_back(c);
        }
        if (i < n && in[i] != ',' && in[i] != '\n' && in[i] != '\r') {
          throw DatasetError("unexpected character after closing quote at line " + std::to_string(line));
        }
      } else {
        while (i < n && in[i] != ',' && in[i] != '\n' && in[i] != '\r') {
          field.push_back(in[i++]);
        }
        if (!field.empty()) any_content = true;
      }

      rec.fields.push_back(std::move(field));
      field.clear();

      if (i < n && in[i] == ',') {
        any_content = true;
        ++i;
        continue;
      }
      if (i < n && in[i] == '\r') ++i;
      if (i < n && in[i] == '\n') ++i;
      ++line;
      break;
    }

    if (any_content) records.push_back(std::move(rec));
  }
  return records;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::optional<Emotion> decode_label(std::string_view raw, LabelFormat format, std::size_t line, std::string& err) {
  const std::string_view label = trim(raw);
  const bool integer = format == LabelFormat::integer_coded ||
                       (format == LabelFormat::automatic && (all_digits(label) || label.starts_with('-')));
  if (integer) {
    long long code = 0;
    const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), code);
    if (ec != std::errc{} || ptr != label.data() + label.size()) {
      err = "invalid label code '" + std::string(label) + "' at line " + std::to_string(line);
      return std::nullopt;
    }
    if (auto e = label_from_code(code)) return e;
    err = "unknown label code " + std::to_string(code) + " at line " + std::to_string(line);
    return std::nullopt;
  }
  if (auto e = label_from_name(label)) return e;
  err = "unknown label name '" + std::string(label) + "' at line " + std::to_string(line);
  return std::nullopt;
}

std::vector<std::vector<const Sample*>> by_class(std::span<const Sample> samples) {
  std::vector<const Sample*> ordered;
  ordered.reserve(samples.size());
  for (const Sample& s : samples) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const Sample* a, const Sample* b) { return a->id < b->id; });

  std::vector<std::vector<const Sample*>> classes(kEmotionCount);
  for (const Sample* s : ordered) classes[label_id(s->gold)].push_back(s);
  return classes;
}

std::vector<Sample> sorted_copy(const std::vector<const Sample*>& picked) {
  std::vector<Sample> out;
  out.reserve(picked.size());
  for (const Sample* s : picked) out.push_back(*s);
  std::sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return out;
}

std::string csv_quote(std::string_view s) {
  const bool needs = s.find_first_of(",\"\r\n") != std::string_view::npos || s != trim(s);
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

LoadResult parse_csv(std::string_view content, LabelFormat format) {
  const auto records = read_records(content);
  if (records.empty()) throw DatasetError("missing header row 'text,label'");

  const auto& header = records.front();
  auto lower = [](std::string_view s) {
    std::string out(trim(s));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  if (header.fields.size() != 2 || lower(header.fields[0]) != "text" || lower(header.fields[1]) != "label") {
    throw DatasetError("expected header row 'text,label' at line " + std::to_string(header.line));
  }

  LoadResult result;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const Record& rec = records[r];
    if (rec.fields.size() != 2) {
      throw DatasetError("expected 2 columns, found " + std::to_string(rec.fields.size()) + " at line " +
                         std::to_string(rec.line));
    }
    ++result.data_rows;
    if (trim(rec.fields[0]).empty()) {
      result.errors.push_back({rec.line, "empty text at line " + std::to_string(rec.line)});
      continue;
    }
    std::string err;
    const auto gold = decode_label(rec.fields[1], format, rec.line, err);
    if (!gold) {
      result.errors.push_back({rec.line, std::move(err)});
      continue;
    }
    result.samples.push_back({result.samples.size(), rec.fields[0], *gold});
  }
  return result;
}

LoadResult load_csv(const std::filesystem::path& path, LabelFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), format);
}

std::string to_csv(std::span<const Sample> samples, LabelFormat format) {
  std::string out = "text,label\n";
  for (const Sample& s : samples) {
    out += csv_quote(s.text);
    out += ',';
    if (format == LabelFormat::integer_coded) {
      out += std::to_string(label_id(s.gold));
    } else {
      out += label_name(s.gold);
    }
    out += '\n';
  }
  return out;
}

Split split(std::span<const Sample> samples, const SplitSpec& spec) {
  if (spec.finetune_size == 0 || spec.eval_size == 0) {
    throw ConfigError("split sizes must be positive");
  }
  if (spec.finetune_size + spec.eval_size > samples.size()) {
    throw ConfigError("split sizes " + std::to_string(spec.finetune_size) + "+" + std::to_string(spec.eval_size) +
                      " exceed corpus size " + std::to_string(samples.size()));
  }

  Split out;
  if (spec.strategy == SplitStrategy::head_tail) {
    out.finetune.assign(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(spec.finetune_size));
    out.eval.assign(samples.begin() + static_cast<std::ptrdiff_t>(spec.finetune_size),
                    samples.begin() + static_cast<std::ptrdiff_t>(spec.finetune_size + spec.eval_size));
    return out;
  }

  auto classes = by_class(samples);
  std::vector<std::uint64_t> sizes;
  for (const auto& c : classes) sizes.push_back(c.size());

  const auto ft_alloc = proportional_allocation(sizes, spec.finetune_size);
  std::vector<std::uint64_t> remaining(kEmotionCount);
  for (std::size_t c = 0; c < kEmotionCount; ++c) remaining[c] = sizes[c] - ft_alloc[c];
  // Allocate eval against the full-class proportions, capped by what is left.
  auto ev_alloc = proportional_allocation(sizes, spec.eval_size);
  std::size_t deficit = 0;
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    if (ev_alloc[c] > remaining[c]) {
      deficit += ev_alloc[c] - remaining[c];
      ev_alloc[c] = remaining[c];
    }
  }
  for (std::size_t c = 0; deficit > 0 && c < kEmotionCount; ++c) {
    const std::size_t room = remaining[c] - ev_alloc[c];
    const std::size_t take = std::min(room, deficit);
    ev_alloc[c] += take;
    deficit -= take;
  }

  SplitMix rng(spec.seed);
  std::vector<const Sample*> ft, ev;
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    auto& members = classes[c];
    rng.shuffle(std::span(members));
    ft.insert(ft.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(ft_alloc[c]));
    ev.insert(ev.end(), members.begin() + static_cast<std::ptrdiff_t>(ft_alloc[c]),
              members.begin() + static_cast<std::ptrdiff_t>(ft_alloc[c] + ev_alloc[c]));
  }
  out.finetune = sorted_copy(ft);
  out.eval = sorted_copy(ev);
  return out;
}

LabelDistribution class_histogram(std::span<const Sample> samples) {
  std::array<std::uint64_t, kEmotionCount> counts{};
  for (const Sample& s : samples) ++counts[label_id(s.gold)];
  return LabelDistribution::over_labels(counts);
}

std::vector<Sample> filter_for_scheme(std::span<const Sample> samples, const GroupingScheme& scheme) {
  std::vector<Sample> out;
  for (const Sample& s : samples) {
    if (scheme.maps(s.gold)) out.push_back(s);
  }
  return out;
}

std::vector<std::size_t> proportional_allocation(std::span<const std::uint64_t> weights, std::size_t n) {
  const std::uint64_t total = std::accumulate(weights.begin(), weights.end(), std::uint64_t{0});
  std::vector<std::size_t> alloc(weights.size(), 0);
  if (total == 0 || n == 0) return alloc;

  // Exact integer arithmetic: quota_i = w_i * n / total, remainder kept as numerator.
  std::vector<std::pair<std::uint64_t, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const unsigned __int128 scaled = static_cast<unsigned __int128>(weights[i]) * n;
    alloc[i] = static_cast<std::size_t>(scaled / total);
    remainders.emplace_back(static_cast<std::uint64_t>(scaled % total), i);
    assigned += alloc[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n && r < remainders.size(); ++r, ++assigned) {
    ++alloc[remainders[r].second];
  }
  return alloc;
}

std::vector<Sample> stratified_subsample(std::span<const Sample> samples, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > samples.size()) {
    throw ConfigError("subsample size " + std::to_string(n) + " is infeasible for a corpus of " +
                      std::to_string(samples.size()));
  }
  auto classes = by_class(samples);
  std::vector<std::uint64_t> sizes;
  for (const auto& c : classes) sizes.push_back(c.size());
  const auto alloc = proportional_allocation(sizes, n);

  SplitMix rng(seed);
  std::vector<const Sample*> picked;
  for (std::size_t c = 0; c < kEmotionCount; ++c) {
    auto& members = classes[c];
    rng.shuffle(std::span(members));
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(alloc[c]));
  }
  return sorted_copy(picked);
}

std::vector<Sample> make_synthetic_corpus(std::span<const std::array<std::uint64_t, kEmotionCount>> blocks,
                                          std::uint64_t seed) {
  static constexpr std::array<std::array<std::string_view, 4>, kEmotionCount> kCue = {{
      {"hopeless", "miserable", "gloomy", "heartbroken"},
      {"cheerful", "delighted", "content", "glad"},
      {"affectionate", "tender", "caring", "romantic"},
      {"furious", "irritated", "resentful", "bitter"},
      {"terrified", "anxious", "nervous", "uneasy"},
      {"amazed", "shocked", "stunned", "astonished"},
  }};
  static constexpr std::array<std::string_view, 5> kContext = {
      "about the week ahead", "after talking to my sister", "when i got home", "this morning",
      "reading the news"};

  SplitMix rng(seed);
  std::vector<Sample> corpus;
  for (const auto& block : blocks) {
    std::vector<Emotion> labels;
    for (Emotion e : canonical_labels()) labels.insert(labels.end(), block[label_id(e)], e);
    rng.shuffle(std::span(labels));
    for (Emotion e : labels) {
      const std::uint64_t id = corpus.size();
      const auto& cues = kCue[label_id(e)];
      std::string text = "i feel ";
      text += cues[rng.below(cues.size())];
      text += ' ';
      text += kContext[rng.below(kContext.size())];
      text += " (entry ";
      text += std::to_string(id);
      text += ')';
      corpus.push_back({id, std::move(text), e});
    }
  }
  return corpus;
}

}  // namespace emobench
