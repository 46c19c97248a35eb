#include "json_io.hpp"

#include "bridgestain/error.hpp"

namespace bridgestain {

json to_json_value(const nn::UNetConfig& c) {
  return json{{"levels", c.levels},
              {"base_width", c.base_width},
              {"attention_heads", c.attention_heads},
              {"time_embed_dim", c.time_embed_dim},
              {"in_channels", c.in_channels},
              {"out_channels", c.out_channels},
              {"norm_groups", c.norm_groups},
              {"attention_min_level", c.attention_min_level}};
}

json to_json_value(const nn::ConditionerConfig& c) {
  return json{{"in_channels", c.in_channels},
              {"hidden", c.hidden},
              {"factor", c.factor},
              {"out_channels", c.out_channels}};
}

json to_json_value(const ModelSpec& s) {
  return json{{"unet", to_json_value(s.unet)},
              {"conditioner", to_json_value(s.conditioner)},
              {"T", s.T}};
}

json to_json_value(const NormalizationStats& s) {
  return json{{"mean", s.mean},
              {"std", s.std},
              {"scope", s.scope == StatsScope::dataset ? "dataset" : "per-image"}};
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nn::UNetConfig unet_config_from(const json& j, nn::UNetConfig c) {
  read_opt(j, "levels", c.levels);
  read_opt(j, "base_width", c.base_width);
  read_opt(j, "attention_heads", c.attention_heads);
  read_opt(j, "time_embed_dim", c.time_embed_dim);
  read_opt(j, "in_channels", c.in_channels);
  read_opt(j, "out_channels", c.out_channels);
  read_opt(j, "norm_groups", c.norm_groups);
  read_opt(j, "attention_min_level", c.attention_min_level);
  return c;
}

nn::ConditionerConfig conditioner_config_from(const json& j, nn::ConditionerConfig c) {
  read_opt(j, "in_channels", c.in_channels);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "factor", c.factor);
  read_opt(j, "out_channels", c.out_channels);
  return c;
}

ModelSpec model_spec_from(const json& j) {
  ModelSpec s;
  s.unet = unet_config_from(j.at("unet"));
  s.conditioner = conditioner_config_from(j.at("conditioner"));
  s.T = j.at("T").get<int>();
  return s;
}

NormalizationStats stats_from(const json& j) {
  NormalizationStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  s.scope = j.value("scope", "dataset") == "dataset" ? StatsScope::dataset : StatsScope::per_image;
  require(s.mean.size() == s.std.size(), ErrorCode::invalid_config,
          "normalization stats mean/std length mismatch");
  return s;
}

}  // namespace bridgestain
