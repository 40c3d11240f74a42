// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configs. Every reader fills unspecified fields with defaults and
// every writer emits all fields, so a written config reproduces its run.
// Syntax errors report line and column; semantic errors name the field path.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fp8forge/binary_io.hpp"
#include "fp8forge/errors.hpp"
#include "fp8forge/fp8.hpp"
#include "fp8forge/pipeline_config.hpp"
#include "fp8forge/quantizer.hpp"

namespace fp8forge::experiment {

using json = nlohmann::ordered_json;

// Parses config text. Empty or whitespace-only text is rejected; use "{}"
// for all defaults.
inline json parse_config_text(std::string_view text, const std::string& source = "<config>") {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    throw ConfigError("config error: " + source + " is empty (use {} for defaults)");
  }
  try {
    json j = json::parse(text.begin(), text.end());
    if (!j.is_object()) throw ConfigError("config error: " + source + ": top level must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string detail = e.what();
    if (const auto p = detail.find("syntax error"); p != std::string::npos) detail = detail.substr(p);
    throw ConfigError("config error: " + source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " +
                      detail);
  }
}

inline json load_config_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return parse_config_text(text, path.string());
}

// Typed access to one JSON object with defaults, tracking which keys were
// used so that misspelled fields are reported.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config error: field '" + path_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    const json* v = lookup(key);
    if (v == nullptr) return def;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) fail(key, "must be non-negative");
    if (v->is_number_float()) {
      const double d = v->get<double>();
      if (d >= 0.0 && d == static_cast<double>(static_cast<std::uint64_t>(d))) return static_cast<std::uint64_t>(d);
    }
    fail(key, "expected a non-negative integer, got " + type_of(*v));
  }

  std::size_t positive(const std::string& key, std::size_t def) {
    const auto v = u64(key, def);
    if (v == 0) fail(key, "must be at least 1");
    return static_cast<std::size_t>(v);
  }

  double number(const std::string& key, double def) {
    const json* v = lookup(key);
    if (v == nullptr) return def;
    if (!v->is_number()) fail(key, "expected a number, got " + type_of(*v));
    return v->get<double>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* v = lookup(key);
    if (v == nullptr) return def;
    if (!v->is_boolean()) fail(key, "expected true or false, got " + type_of(*v));
    return v->get<bool>();
  }

  std::string str(const std::string& key, const std::string& def) {
    const json* v = lookup(key);
    if (v == nullptr) return def;
    if (!v->is_string()) fail(key, "expected a string, got " + type_of(*v));
    return v->get<std::string>();
  }

  // Nested object; an absent key yields an empty object.
  FieldReader object(const std::string& key) {
    const json* v = lookup(key);
    static const json kEmpty = json::object();
    if (v == nullptr) return FieldReader(kEmpty, child(key));
    if (!v->is_object()) fail(key, "expected an object, got " + type_of(*v));
    return FieldReader(*v, child(key));
  }

  const json* array(const std::string& key) {
    const json* v = lookup(key);
    if (v != nullptr && !v->is_array()) fail(key, "expected an array, got " + type_of(*v));
    return v;
  }

  // Wraps a parse of a string field, turning library errors into field errors.
  template <class Fn>
  auto parsed(const std::string& key, const std::string& def, Fn&& fn) {
    const std::string s = str(key, def);
    try {
      return fn(s);
    } catch (const InvalidArgumentError& e) {
      fail(key, e.what());
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError("config error: field '" + child(key) + "': " + msg);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& path() const { return path_; }

  // Rejects keys no reader asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config error: unknown field '" + child(it.key()) + "'");
    }
  }

 private:
  const json* lookup(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  static std::string type_of(const json& v) { return v.type_name(); }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Default block and token-group size at desk scale, where the models are
// only 64 wide.
inline constexpr std::size_t kDeskGroup = 16;

inline ScaleSpec read_scale_spec(FieldReader r, const ScaleSpec& def) {
  ScaleSpec s;
  s.granularity = r.parsed("granularity", std::string(granularity_name(def.granularity)),
                           [](const std::string& v) { return parse_granularity(v); });
  if (s.granularity == Granularity::kPerTensor) {
    r.u64("group", 0);  // accepted for symmetry, has no effect
    s.group = 0;
  } else {
    s.group = r.positive("group", def.group == 0 ? kDeskGroup : def.group);
  }
  s.scale_format = r.parsed("scale_format", std::string(scale_format_name(def.scale_format)),
                            [](const std::string& v) { return parse_scale_format(v); });
  r.finish();
  return s;
}

inline json write_scale_spec(const ScaleSpec& s) {
  return json{{"granularity", granularity_name(s.granularity)},
              {"group", s.group},
              {"scale_format", scale_format_name(s.scale_format)}};
}

inline Fp8Kind read_format(FieldReader& r, const std::string& key, Fp8Kind def) {
  return r.parsed(key, std::string(format_of(def).name), [](const std::string& v) { return parse_format(v).kind; });
}

inline PipelineConfig read_pipeline(FieldReader r) {
  const PipelineConfig def = PipelineConfig::hybrid(kDeskGroup);
  PipelineConfig p;
  p.weight_format = read_format(r, "weight_format", def.weight_format);
  p.activation_format = read_format(r, "activation_format", def.activation_format);
  p.gradient_format = read_format(r, "gradient_format", def.gradient_format);
  p.weight_spec = read_scale_spec(r.object("weight_spec"), def.weight_spec);
  p.activation_spec = read_scale_spec(r.object("activation_spec"), def.activation_spec);
  p.gradient_spec = read_scale_spec(r.object("gradient_spec"), def.gradient_spec);
  if (r.has("scale_format_override")) {
    p.scale_format_override =
        r.parsed("scale_format_override", "", [](const std::string& v) { return parse_scale_format(v); });
  } else {
    r.str("scale_format_override", "");
  }
  p.quantization_enabled = r.boolean("quantization_enabled", def.quantization_enabled);
  p.quantize_attention_scores = r.boolean("quantize_attention_scores", def.quantize_attention_scores);
  r.finish();
  return p;
}

inline json write_pipeline(const PipelineConfig& p) {
  json j;
  j["weight_format"] = format_of(p.weight_format).name;
  j["activation_format"] = format_of(p.activation_format).name;
  j["gradient_format"] = format_of(p.gradient_format).name;
  j["weight_spec"] = write_scale_spec(p.weight_spec);
  j["activation_spec"] = write_scale_spec(p.activation_spec);
  j["gradient_spec"] = write_scale_spec(p.gradient_spec);
  j["scale_format_override"] =
      p.scale_format_override ? json(scale_format_name(*p.scale_format_override)) : json(nullptr);
  j["quantization_enabled"] = p.quantization_enabled;
  j["quantize_attention_scores"] = p.quantize_attention_scores;
  return j;
}

// Serialized text of an emitted config: two-space indent, trailing newline.
inline std::string config_text(const json& j) { return j.dump(2) + "\n"; }

}  // namespace fp8forge::experiment
