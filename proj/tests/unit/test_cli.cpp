#include <gtest/gtest.h>

#include <fstream>
#include <unistd.h>

#include "avdit/cli/commands.hpp"
#include "avdit/cli/probes.hpp"

using namespace avdit;
using namespace avdit::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("avdit_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
    const RunConfig c = resolve_config(json::object(), {});
    EXPECT_EQ(json(c), json(RunConfig{}));
    EXPECT_EQ(run_config_hash(c).size(), 16u);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(resolve_config(json{{"train", {{"stepz", 3}}}}, {}), Error);
    EXPECT_THROW(resolve_config(json{{"extra", 1}}, {}), Error);
    EXPECT_THROW(resolve_config(json::object(), {"model.nope=1"}), Error);
}

TEST(Config, TypeErrorsListed) {
    try {
        resolve_config(json{{"train", {{"steps", "many"}, {"lr", true}}}}, {});
        FAIL() << "expected a schema error";
    } catch (const Error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("train.steps"), std::string::npos) << msg;
        EXPECT_NE(msg.find("train.lr"), std::string::npos) << msg;
    }
    EXPECT_THROW(resolve_config(json{{"train", {{"steps", -4}}}}, {}), Error);
    EXPECT_THROW(resolve_config(json{{"sample", {{"mode", "x2y"}}}}, {}), Error);
    EXPECT_THROW(resolve_config(json{{"sample", {{"tile", {1, 2}}}}}, {}), Error);
}

TEST(Config, OverridesLastWins) {
    const RunConfig c = resolve_config(json{{"train", {{"steps", 5}}}}, {"train.steps=7", "sample.mode=v2a", "train.steps=9"});
    EXPECT_EQ(c.train.steps, 9u);
    EXPECT_EQ(c.sample.mode, sampler::Mode::v2a);
    EXPECT_THROW(resolve_config(json::object(), {"train.steps"}), Error);
}

TEST(Config, OverrideParsesJsonValues) {
    const RunConfig c = resolve_config(json::object(), {"sample.tile=[2,3,4]", "train.lr=0.5", "sample.refine=false"});
    EXPECT_EQ(c.sample.tile, (std::array<std::size_t, 3>{2, 3, 4}));
    EXPECT_EQ(c.train.lr, 0.5);
    EXPECT_FALSE(c.sample.refine);
}

TEST(Config, ModelValidationRuns) {
    EXPECT_THROW(resolve_config(json::object(), {"model.depth=0"}), Error);
}

TEST(Config, PublishedSchemaMatches) {
    std::ifstream is(fs::path(AVDIT_SOURCE_DIR) / "config" / "schema.json");
    ASSERT_TRUE(is) << "config/schema.json missing";
    EXPECT_EQ(json::parse(is), config_schema()) << "regenerate with: build/tools/gen_schema > config/schema.json";
}

TEST(Config, SchemaAcceptsDefaultsAndTiny) {
    EXPECT_TRUE(validate_against(json(RunConfig{}), config_schema()).empty());
    EXPECT_TRUE(validate_against(json(RunConfig::tiny()), config_schema()).empty());
}

TEST(Probe, CatalogMatchesInvariantCount) {
    const auto& cat = probe_catalog();
    EXPECT_EQ(cat.size(), 27u);
    std::set<std::string> ids;
    for (const auto& p : cat) ids.insert(p.id);
    EXPECT_EQ(ids.size(), cat.size());
}

TEST(Probe, AllPassWithoutRunExceptTrainedSkipped) {
    const ProbeReport r = run_probes({});
    ASSERT_EQ(r.results.size(), probe_catalog().size());
    for (const auto& p : r.results) {
        if (p.info.trained) EXPECT_EQ(p.status, ProbeStatus::skip) << p.info.id;
        else EXPECT_EQ(p.status, ProbeStatus::pass) << p.info.id << ": " << p.detail;
    }
    EXPECT_TRUE(r.ok());
    const json j = r.to_json();
    EXPECT_EQ(j.at("total"), 27);
    EXPECT_EQ(j.at("skipped"), 1);
    EXPECT_NE(r.text().find("SKIP  codecs.roundtrip"), std::string::npos);
}

TEST(Probe, RopeBaseMutationFailsRelativePosition) {
    ProbeOptions o;
    o.suite = "posenc";
    o.mutations = {"rope-base"};
    const ProbeReport r = run_probes(o);
    EXPECT_FALSE(r.ok());
    for (const auto& p : r.results) {
        EXPECT_EQ(p.status == ProbeStatus::fail, p.info.id == "posenc.relative_position") << p.info.id;
    }
}

TEST(Probe, UnknownSuiteOrMutation) {
    ProbeOptions o;
    o.suite = "nope";
    EXPECT_THROW(run_probes(o), Error);
    o.suite = "all";
    o.mutations = {"flip"};
    EXPECT_THROW(run_probes(o), Error);
}

class TinyRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = new fs::path(scratch("run"));
        RunConfig c = RunConfig::tiny();
        const std::vector<std::string> overrides{"train.steps=12", "train.seed=3", "train.steps=14"};
        c = resolve_config(json(c), overrides);
        manifest_ = new json(run_train({c, overrides, *root_ / "run", false, {}}));
    }
    static void TearDownTestSuite() {
        fs::remove_all(*root_);
        delete root_;
        delete manifest_;
    }
    static fs::path* root_;
    static json* manifest_;
};
fs::path* TinyRun::root_ = nullptr;
json* TinyRun::manifest_ = nullptr;

TEST_F(TinyRun, ManifestRecordsConfigAndOverrides) {
    const json& m = *manifest_;
    EXPECT_EQ(m.at("overrides"), (json{"train.steps=12", "train.seed=3", "train.steps=14"}));
    EXPECT_EQ(m.at("config").at("train").at("steps"), 14);
    EXPECT_EQ(m.at("config_hash"), run_config_hash(m.at("config").get<RunConfig>()));
    EXPECT_EQ(m.at("results").at("steps"), 14);
    EXPECT_LT(m.at("results").at("standardization_error").get<double>(), 1e-9);
    EXPECT_TRUE(fs::exists(RunLayout{*root_ / "run"}.model() / "params.avt"));
    EXPECT_EQ(json::parse(slurp(RunLayout{*root_ / "run"}.manifest())), m);
}

TEST_F(TinyRun, SampleRerunIsBitwise) {
    SampleRequest req;
    req.run = *root_ / "run";
    req.prompt = "green square bounces";
    req.overrides = {"sample.seed=4", "sample.steps=3"};
    req.config = resolve_config(json(RunConfig::tiny()), req.overrides);
    req.out = *root_ / "a";
    const json m = run_sample(req);
    EXPECT_EQ(m.at("config_hash"), run_config_hash(req.config));
    EXPECT_EQ(m.at("overrides"), json(req.overrides));
    rerun_manifest(req.out / "manifest.json", *root_ / "b");
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(req.out)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), req.out);
        EXPECT_EQ(slurp(e.path()), slurp(*root_ / "b" / rel)) << rel;
        ++files;
    }
    EXPECT_GT(files, 4u);
}

TEST_F(TinyRun, RerunRejectsTamperedConfig) {
    SampleRequest req;
    req.run = *root_ / "run";
    req.prompt = "red square";
    req.config = RunConfig::tiny();
    req.out = *root_ / "c";
    json m = run_sample(req);
    m["config"]["sample"]["seed"] = 99;
    std::ofstream(*root_ / "c" / "manifest.json") << m.dump(2);
    EXPECT_THROW(rerun_manifest(*root_ / "c" / "manifest.json", *root_ / "d"), Error);
}

TEST_F(TinyRun, ResumeRefusesChangedConfig) {
    RunConfig c = resolve_config(json(RunConfig::tiny()), {"train.steps=14", "train.seed=3", "train.lr=0.5"});
    EXPECT_THROW(run_train({c, {}, *root_ / "run", true, {}}), Error);
}

TEST_F(TinyRun, V2AKeepsInputClip) {
    SampleRequest req;
    req.run = *root_ / "run";
    req.config = resolve_config(json(RunConfig::tiny()), {"sample.mode=\"v2a\""});
    req.input_clip = 5;
    req.out = *root_ / "v2a";
    const json m = run_sample(req);
    EXPECT_EQ(m.at("input_clip"), 5);
    EXPECT_FALSE(m.at("prompt").get<std::string>().empty());
}

TEST_F(TinyRun, DumpAttentionWritesBothDirections) {
    SampleRequest req;
    req.run = *root_ / "run";
    req.prompt = "red square";
    req.config = RunConfig::tiny();
    req.out = *root_ / "attn";
    run_dump_attention(req, {});
    for (const char* f : {"attn_v2a_tokens", "attn_a2v_tokens", "attn_v2a_frames", "attn_a2v_frames"}) {
        EXPECT_TRUE(fs::exists(req.out / (std::string(f) + ".avt"))) << f;
        EXPECT_TRUE(fs::exists(req.out / (std::string(f) + ".png"))) << f;
    }
}

TEST_F(TinyRun, TrainedProbeRunsWithRun) {
    ProbeOptions o;
    o.suite = "codecs";
    o.run = *root_ / "run";
    const ProbeReport r = run_probes(o);
    ASSERT_EQ(r.results.size(), 3u);
    // Twenty codec steps are far from the round-trip bounds; the probe runs and reports that.
    EXPECT_NE(r.results[2].status, ProbeStatus::skip);
    EXPECT_NE(r.results[2].detail.find("held-out audio"), std::string::npos);
}
