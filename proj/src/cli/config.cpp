#include "avdit/cli/config.hpp"

#include <fstream>

namespace avdit::cli {

using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
    j = {{"model", c.model}, {"data", c.data}, {"train", c.train}, {"sample", c.sample}};
}

void from_json(const json& j, RunConfig& c) {
    j.at("model").get_to(c.model);
    j.at("data").get_to(c.data);
    j.at("train").get_to(c.train);
    j.at("sample").get_to(c.sample);
}

RunConfig RunConfig::tiny() {
    RunConfig c;
    c.model = model::ModelConfig::tiny();
    c.model.encoder.max_tokens = 24;  // room for the longest synthetic caption
    c.data.video_vae.latent = c.model.video.latent_channels;
    c.data.video_vae.hidden = 16;
    c.data.audio_vae.latent = c.model.audio.latent_channels;
    c.data.audio_vae.hidden = 16;
    c.data.audio_train.steps = 20;
    c.data.video_train.steps = 20;
    c.data.codec_clips = 16;
    c.data.train_clips = 8;
    c.data.eval_clips = 4;
    c.train.steps = 20;
    c.train.batch = 2;
    c.train.checkpoint_every = 10;
    c.train.freeze_features_after = 10;
    c.sample.steps = 2;
    return c;
}

namespace {

json schema_of(const json& v) {
    switch (v.type()) {
        case json::value_t::object: {
            json props = json::object();
            for (const auto& [k, x] : v.items()) props[k] = schema_of(x);
            return {{"type", "object"}, {"properties", props}, {"additionalProperties", false}};
        }
        case json::value_t::array: {
            json s = {{"type", "array"}, {"minItems", v.size()}, {"maxItems", v.size()}};
            if (!v.empty()) s["items"] = schema_of(v.front());
            return s;
        }
        case json::value_t::boolean:
            return {{"type", "boolean"}};
        case json::value_t::number_unsigned:
            return {{"type", "integer"}, {"minimum", 0}};
        case json::value_t::number_integer:
            return {{"type", "integer"}};
        case json::value_t::number_float:
            return {{"type", "number"}};
        case json::value_t::string:
            return {{"type", "string"}};
        default:
            return json::object();
    }
}

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "boolean") return v.is_boolean();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "string") return v.is_string();
    return true;
}

void check(const json& v, const json& s, const std::string& path, std::vector<std::string>& out) {
    const std::string where = path.empty() ? "<root>" : path;
    if (s.contains("type") && !has_type(v, s["type"].get<std::string>())) {
        out.push_back(where + ": expected " + s["type"].get<std::string>() + ", got " + v.type_name());
        return;
    }
    if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) {
        out.push_back(where + ": " + v.dump() + " is not one of " + s["enum"].dump());
    }
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>()) {
        out.push_back(where + ": below minimum " + s["minimum"].dump());
    }
    if (v.is_object()) {
        const json& props = s.value("properties", json::object());
        for (const auto& [k, x] : v.items()) {
            const std::string sub = path.empty() ? k : path + "." + k;
            if (!props.contains(k)) {
                if (!s.value("additionalProperties", true)) out.push_back(sub + ": unknown key");
                continue;
            }
            check(x, props[k], sub, out);
        }
    }
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
            out.push_back(where + ": needs at least " + s["minItems"].dump() + " items");
        if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
            out.push_back(where + ": allows at most " + s["maxItems"].dump() + " items");
        if (s.contains("items"))
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], where + "[" + std::to_string(i) + "]", out);
    }
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string s;
    for (const auto& l : lines) s += "\n  " + l;
    return s;
}

}  // namespace

json config_schema() {
    json s = schema_of(json(RunConfig{}));
    s["properties"]["sample"]["properties"]["mode"]["enum"] = {"t2av", "v2a", "a2v"};
    json out = {{"$schema", "http://json-schema.org/draft-07/schema#"}, {"title", "avdit run configuration"}};
    out.update(s);
    return out;
}

std::vector<std::string> validate_against(const json& j, const json& schema) {
    std::vector<std::string> out;
    check(j, schema, "", out);
    return out;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("override '" + assignment + "': expected key.path=value");
    const std::string path = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    const json defaults = RunConfig{};
    const json* known = &defaults;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty() || !known->is_object() || !known->contains(key)) {
            throw Error("override '" + assignment + "': unknown key '" + path.substr(0, dot == std::string::npos ? path.size() : dot) + "'");
        }
        known = &(*known)[key];
        if (!node->is_object()) *node = json::object();
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    *node = value;
}

RunConfig resolve_config(const json& doc, const std::vector<std::string>& overrides) {
    json merged = json(RunConfig{});
    const json schema = config_schema();
    auto diagnostics = validate_against(doc, schema);
    if (!diagnostics.empty()) throw Error("invalid config:" + join_lines(diagnostics));
    merged.merge_patch(doc);
    for (const auto& o : overrides) apply_override(merged, o);
    diagnostics = validate_against(merged, schema);
    if (!diagnostics.empty()) throw Error("invalid config after overrides:" + join_lines(diagnostics));
    RunConfig c;
    try {
        c = merged.get<RunConfig>();
        c.model.validate();
    } catch (const json::exception& e) {
        throw Error(std::string("invalid config: ") + e.what());
    }
    return c;
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
    json doc = json::object();
    if (file) {
        std::ifstream is(*file);
        if (!is) throw Error("cannot read config " + file->string());
        doc = json::parse(is, nullptr, false);
        if (doc.is_discarded()) throw Error("config " + file->string() + " is not valid JSON");
    }
    return resolve_config(doc, overrides);
}

std::string run_config_hash(const RunConfig& c) { return model::config_hash(json(c)); }

}  // namespace avdit::cli
