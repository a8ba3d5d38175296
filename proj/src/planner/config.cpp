#include "piece/planner/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>

#include "piece/error.hpp"
#include "piece/numerics/rng.hpp"

namespace piece::planner {

namespace {

std::string format(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw UsageError("config: invalid value \"" + std::string(value) + "\" for " + std::string(key));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) bad_value(key, value);
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

struct Field {
  const char* key;
  std::function<std::string(const PieceConfig&)> get;
  std::function<void(PieceConfig&, std::string_view key, std::string_view value)> set;
};

template <typename T>
Field field(const char* key, T PieceConfig::*member) {
  return {key, [member](const PieceConfig& c) { return format(c.*member); },
          [member](PieceConfig& c, std::string_view k, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) {
              c.*member = parse_bool(k, v);
            } else {
              c.*member = parse_number<T>(k, v);
            }
          }};
}

template <typename Outer, typename T>
Field nested(const char* key, Outer PieceConfig::*outer, T Outer::*member) {
  return {key, [outer, member](const PieceConfig& c) { return format((c.*outer).*member); },
          [outer, member](PieceConfig& c, std::string_view k, std::string_view v) {
            if constexpr (std::is_same_v<T, bool>) {
              (c.*outer).*member = parse_bool(k, v);
            } else {
              (c.*outer).*member = parse_number<T>(k, v);
            }
          }};
}

const std::vector<Field>& fields() {
  using C = PieceConfig;
  using classifier::ClassifierConfig;
  static const std::vector<Field> all{
      field("seed", &C::seed),
      field("min_count", &C::min_count),
      field("embed_dim", &C::embed_dim),
      field("static_dim", &C::static_dim),
      field("scaffold_hidden", &C::scaffold_hidden),
      nested("stalk_dim", &C::sheaf, &sheaf::SheafConfig::stalk_dim),
      nested("sheaf_out", &C::sheaf, &sheaf::SheafConfig::out_dim),
      nested("diagonal_maps", &C::sheaf, &sheaf::SheafConfig::diagonal_maps),
      field("same_speaker_edges", &C::same_speaker_edges),
      field("width", &C::width),
      field("blocks", &C::blocks),
      field("ff_width", &C::ff_width),
      field("d_k", &C::key_dim),
      field("d_v", &C::value_dim),
      field("max_len", &C::max_len),
      field("tied_head", &C::tied_head),
      field("phq_threshold", &C::phq_threshold),
      field("use_gold_components", &C::use_gold_components),
      nested("clf.embed_dim", &C::classifier, &ClassifierConfig::embed_dim),
      nested("clf.hidden_dim", &C::classifier, &ClassifierConfig::hidden_dim),
      nested("clf.window", &C::classifier, &ClassifierConfig::window),
      nested("clf.epochs", &C::classifier, &ClassifierConfig::epochs),
      nested("clf.batch", &C::classifier, &ClassifierConfig::batch_size),
      nested("clf.lr", &C::classifier, &ClassifierConfig::learning_rate),
      nested("clf.decay", &C::classifier, &ClassifierConfig::decay),
      nested("clf.require_all_classes", &C::classifier, &ClassifierConfig::require_all_classes),
      nested("epochs", &C::training, &TrainingConfig::epochs),
      nested("batch", &C::training, &TrainingConfig::batch_size),
      nested("lr", &C::training, &TrainingConfig::learning_rate),
      nested("decay", &C::training, &TrainingConfig::decay),
      nested("split.train", &C::split, &corpus::SplitRatios::train),
      nested("split.val", &C::split, &corpus::SplitRatios::val),
      nested("split.test", &C::split, &corpus::SplitRatios::test),
  };
  return all;
}

}  // namespace

void validate_config(const PieceConfig& c) {
  const std::pair<const char*, std::size_t> dims[] = {
      {"embed_dim", c.embed_dim},   {"static_dim", c.static_dim}, {"scaffold_hidden", c.scaffold_hidden},
      {"stalk_dim", c.sheaf.stalk_dim}, {"sheaf_out", c.sheaf.out_dim}, {"width", c.width},
      {"blocks", c.blocks},         {"ff_width", c.ff_width},     {"d_k", c.key_dim},
      {"d_v", c.value_dim},         {"max_len", c.max_len},       {"min_count", c.min_count},
      {"batch", c.training.batch_size}, {"clf.embed_dim", c.classifier.embed_dim},
      {"clf.hidden_dim", c.classifier.hidden_dim}, {"clf.window", c.classifier.window},
      {"clf.batch", c.classifier.batch_size}};
  for (const auto& [name, v] : dims)
    if (v == 0) throw UsageError(std::string("config: ") + name + " must be positive");
  if (!(c.phq_threshold >= 0.0 && c.phq_threshold <= 1.0)) throw UsageError("config: phq_threshold must lie in [0, 1]");
  for (double lr : {c.training.learning_rate, c.classifier.learning_rate})
    if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("config: learning rates must be positive");
  for (double d : {c.training.decay, c.classifier.decay})
    if (!(d > 0.0) || !std::isfinite(d)) throw UsageError("config: decay factors must be positive");
  const auto& r = c.split;
  for (double x : {r.train, r.val, r.test})
    if (!(x >= 0.0 && x <= 1.0)) throw UsageError("config: split ratios must lie in [0, 1]");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw UsageError("config: split ratios must sum to 1");
}

ConfigEntries config_entries(const PieceConfig& config) {
  ConfigEntries out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

void set_config_entry(PieceConfig& config, std::string_view key, std::string_view value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(config, key, value);
      return;
    }
  }
  throw UsageError("config: unknown key \"" + std::string(key) + "\"");
}

PieceConfig config_from_entries(const ConfigEntries& entries) {
  PieceConfig c;
  for (const auto& [k, v] : entries) set_config_entry(c, k, v);
  return c;
}

std::string config_hash(const PieceConfig& config) {
  std::string text;
  for (const auto& [k, v] : config_entries(config)) text += k + "=" + v + "\n";
  return num::hex64(num::fnv1a64(text));
}

}  // namespace piece::planner
