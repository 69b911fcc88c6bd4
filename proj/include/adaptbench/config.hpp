#pragma once

// Pipeline configuration: a TOML file of [section] key = value pairs, read
// with CLI11's TOML reader. Every key can also be given on the command line
// (`--set section.key=value` or the subcommand's named flag).

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "adaptbench/error.hpp"
#include "adaptbench/util.hpp"

namespace adaptbench::config {

struct KeySpec {
  std::string_view key;
  std::string_view default_value;  // empty: no default
  bool list = false;
  std::string_view help;
};

// The complete key set; anything else is rejected.
inline constexpr KeySpec kKeys[] = {
    {"dataset.kind", "", false, "chat | wordlist"},
    {"dataset.name", "", false, "dataset label used in manifests and tables"},
    {"dataset.inputs", "", true, ".cha files/directories (chat) or block-labeled TSV files (wordlist)"},
    {"dataset.audio_dir", "audio", false, "prefix for audio paths written to manifests"},
    {"dataset.include_all_speakers", "false", false, "chat: keep non-PAR speakers"},
    {"normalize.apply_replacements", "true", false, ""},
    {"normalize.keep_retraced_words", "true", false, ""},
    {"normalize.drop_unintelligible", "true", false, ""},
    {"normalize.drop_nonspeech", "true", false, ""},
    {"normalize.drop_fragments", "true", false, ""},
    {"normalize.lowercase", "false", false, ""},
    {"filter.mode", "", false, "si | none (default: si for chat, none for wordlist)"},
    {"split.scheme", "", false, "ratio811 | blocks (default: ratio811 for chat, blocks for wordlist)"},
    {"split.fraction", "0.10", false, "share of speakers selected as SS targets"},
    {"split.rounding", "round", false, "ceil | round | floor"},
    {"split.selection_base", "all", false, "all | filtered"},
    {"split.seed", "0", false, "64-bit shuffle seed"},
    {"split.holdout_fraction", "0.10", false, "blocks scheme: validation share of Blocks 1+3"},
    {"scoring.custom_rules", "", false, "TSV of pattern<TAB>replacement"},
    {"scoring.cer_spaces", "include", false, "include | exclude"},
    {"experiment.conditions", "B1,B2,B3,B4", true, ""},
    {"experiment.ood", "", true, "NAME=manifest.jsonl"},
    {"experiment.median_base", "all", false, "all | excl-ties"},
    {"experiment.hyps", "", false, "directory of hypothesis .jsonl files"},
    {"mock.enabled", "false", false, "generate hypotheses with mock-decode during `all`"},
    {"mock.seed", "0", false, ""},
    {"mock.sub", "0.05", false, "substitution probability per word"},
    {"mock.del", "0.03", false, "deletion probability per word"},
    {"mock.ins", "0.02", false, "insertion probability per word"},
    {"mock.offset_b1", "0.20", false, "added to each probability for B1"},
    {"mock.offset_b2", "0.10", false, ""},
    {"mock.offset_b3", "0.00", false, ""},
    {"mock.offset_b4", "0.03", false, ""},
    {"output.dir", "", false, "output directory"},
};

inline const KeySpec* find_key(std::string_view key) {
  for (const auto& k : kKeys)
    if (k.key == key) return &k;
  return nullptr;
}

class Config {
 public:
  Config() = default;

  /// Parses TOML text. Relative paths resolve against `base_dir`.
  static Config parse(std::string_view text, std::filesystem::path base_dir) {
    Config c;
    c.base_dir_ = std::move(base_dir);
    std::istringstream in{std::string(text)};
    std::vector<CLI::ConfigItem> items;
    try {
      items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
      throw Error(ErrorCode::InvalidValue, std::string("config: ") + e.what());
    }
    for (const auto& item : items) {
      if (item.name == "++" || item.name == "--") continue;
      c.set(item.fullname(), item.inputs);
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::string text;
    try {
      text = read_file(path);
    } catch (const Error& e) {
      throw Error(ErrorCode::FileNotFound, "config file: " + std::string(e.what()));
    }
    return parse(text, std::filesystem::absolute(path).parent_path());
  }

  /// Sets a key; rejects keys outside the schema.
  void set(const std::string& key, std::vector<std::string> values) {
    const KeySpec* spec = find_key(key);
    if (!spec) throw Error(ErrorCode::UnknownKey, "unknown config key '" + key + "'");
    if (spec->list) {
      // Accept both TOML arrays and a single comma-separated string.
      std::vector<std::string> flat;
      for (const auto& v : values) {
        std::string_view rest = v;
        while (!rest.empty()) {
          auto comma = rest.find(',');
          auto part = trim(rest.substr(0, comma));
          if (!part.empty()) flat.emplace_back(part);
          rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        }
      }
      values = std::move(flat);
    } else if (values.size() != 1) {
      throw Error(ErrorCode::InvalidValue, "config key '" + key + "' takes a single value");
    }
    values_[key] = std::move(values);
  }

  /// `section.key=value` from the command line.
  void set_assignment(std::string_view assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::InvalidValue, "expected key=value, got '" + std::string(assignment) + "'");
    set(std::string(trim(assignment.substr(0, eq))), {std::string(trim(assignment.substr(eq + 1)))});
  }

  bool has(std::string_view key) const { return values_.count(std::string(key)) > 0; }

  std::string str(std::string_view key) const {
    if (auto it = values_.find(std::string(key)); it != values_.end()) return it->second.front();
    return std::string(spec(key).default_value);
  }

  std::string require(std::string_view key) const {
    if (!has(key) || trim(str(key)).empty())
      throw Error(ErrorCode::MissingKey, "missing required config key '" + std::string(key) + "'");
    return str(key);
  }

  std::vector<std::string> list(std::string_view key) const {
    if (auto it = values_.find(std::string(key)); it != values_.end()) return it->second;
    std::vector<std::string> out;
    std::string_view d = spec(key).default_value;
    while (!d.empty()) {
      auto comma = d.find(',');
      out.emplace_back(d.substr(0, comma));
      d = comma == std::string_view::npos ? std::string_view{} : d.substr(comma + 1);
    }
    return out;
  }

  bool flag(std::string_view key) const {
    auto v = str(key);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw Error(ErrorCode::InvalidValue, "config key '" + std::string(key) + "' must be true|false, got '" + v + "'");
  }

  std::uint64_t u64(std::string_view key) const {
    auto v = str(key);
    std::uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || r.ec != std::errc{} || r.ptr != v.data() + v.size())
      throw Error(ErrorCode::InvalidValue, "config key '" + std::string(key) + "' must be a non-negative integer");
    return out;
  }

  double real(std::string_view key) const {
    auto v = str(key);
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidValue, "config key '" + std::string(key) + "' must be a number, got '" + v + "'");
    }
  }

  std::filesystem::path path(std::string_view key) const { return resolve(str(key)); }

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path fp(p);
    if (p.empty() || fp.is_absolute()) return fp;
    return base_dir_.empty() ? fp : (base_dir_ / fp).lexically_normal();
  }

  const std::filesystem::path& base_dir() const { return base_dir_; }
  void set_base_dir(std::filesystem::path p) { base_dir_ = std::move(p); }

  /// Canonical `key=value` lines of every schema key (defaults included),
  /// values as written. output.dir is left out so relocating a run does not
  /// change its fingerprint.
  std::string canonical() const {
    std::string out;
    for (const auto& k : kKeys) {
      if (k.key == "output.dir") continue;
      out += std::string(k.key) + "=";
      if (k.list)
        out += join(list(k.key), ",");
      else
        out += str(k.key);
      out += "\n";
    }
    return out;
  }

  std::string fingerprint() const { return hex64(fnv1a64(canonical())); }

 private:
  static const KeySpec& spec(std::string_view key) {
    const KeySpec* s = find_key(key);
    if (!s) throw Error(ErrorCode::UnknownKey, "unknown config key '" + std::string(key) + "'");
    return *s;
  }

  std::map<std::string, std::vector<std::string>> values_;
  std::filesystem::path base_dir_;
};

}  // namespace adaptbench::config
