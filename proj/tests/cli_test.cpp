#include "rvcguard/cli.hpp"

#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "test_util.hpp"

namespace rvcguard {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string strip_latency(const std::string& jsonl) {
  return std::regex_replace(jsonl, std::regex(R"("latency_ms":[^,]*,)"), "");
}

// Five speakers, each with an original (REAL) and a converted clip (FAKE).
void make_toy_corpus(const fs::path& root) {
  fs::create_directories(root / "REAL");
  fs::create_directories(root / "FAKE");
  for (int s = 0; s < 5; ++s) {
    const std::string name = "Speaker" + std::to_string(s);
    const auto real = testing::synth_clip(false, 3.0, 16000, 100 + s);
    const auto fake = testing::synth_clip(true, 3.0, 16000, 200 + s);
    testing::write_file(root / "REAL" / (name + ".wav"), testing::make_wav_pcm16(testing::to_pcm16(real), 16000, 1));
    testing::write_file(root / "FAKE" / (name + "-to-Target.wav"),
                        testing::make_wav_pcm16(testing::to_pcm16(fake), 16000, 1));
  }
}

std::string tiny_csv() {
  std::ostringstream out;
  write_feature_csv(out, testing::gaussian_blobs(120, 12, 2.0, 26, 5));
  return out.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string p(const std::string& name) const { return (dir / name).string(); }
  fs::path dir;
};

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  const auto r = cli({"frobnicate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"train", "x.csv", "--epochs", "many"}).code, 2);
}

TEST_F(CliTest, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).code, 0); }

TEST_F(CliTest, TrainHappyPath) {
  std::ofstream(p("d.csv")) << tiny_csv();
  ASSERT_EQ(cli({"split", p("d.csv"), "--out", p("m.json")}).code, 0);
  const auto r = cli({"train", p("d.csv"), "--manifest", p("m.json"), "--model-kind", "logreg", "--out",
                      p("model.json"), "--epochs", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = load_model(p("model.json"));
  EXPECT_EQ(model.kind, ModelKind::kLogReg);
  EXPECT_EQ(model.config.epochs_max, 50);
  EXPECT_NE(r.out.find("\"val\""), std::string::npos);
}

TEST_F(CliTest, EvaluateMissingModel) {
  std::ofstream(p("d.csv")) << tiny_csv();
  const auto missing = p("no_such_model.json");
  const auto r = cli({"evaluate", missing, p("d.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  std::ofstream(p("bad.csv")) << "a,b\n1,2\n";
  EXPECT_EQ(cli({"split", p("bad.csv"), "--out", p("m.json")}).code, 1);
  std::ofstream(p("d.csv")) << tiny_csv();
  EXPECT_EQ(cli({"split", p("d.csv"), "--ratios", "0.5,0.5,0.5", "--out", p("m.json")}).code, 1);
  EXPECT_EQ(cli({"train", p("d.csv"), "--manifest", p("absent.json"), "--out", p("x.json")}).code, 1);
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  std::ofstream(p("d.csv")) << tiny_csv();
  RunConfig rc;
  rc.manifest = p("m.json");
  rc.model = p("model.json");
  rc.model_kind = ModelKind::kKnn;
  rc.train.k_neighbors = 7;
  rc.split_seed = 5;
  std::ofstream(p("cfg.json")) << to_json(rc).dump(2);
  EXPECT_EQ(run_config_from_json(to_json(rc)), rc);

  ASSERT_EQ(cli({"--config", p("cfg.json"), "split", p("d.csv")}).code, 0);
  EXPECT_EQ(load_manifest(p("m.json")).seed, 5u);
  ASSERT_EQ(cli({"--config", p("cfg.json"), "train", p("d.csv"), "--k-neighbors", "3"}).code, 0);
  const auto model = load_model(p("model.json"));
  EXPECT_EQ(model.kind, ModelKind::kKnn);
  EXPECT_EQ(std::get<KnnParams>(model.params).k, 3);
}

TEST_F(CliTest, FullPipelineOnToyCorpus) {
  make_toy_corpus(dir / "corpus");
  auto r = cli({"features", p("corpus"), "--out", p("f.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = load_feature_csv(p("f.csv"));
  EXPECT_EQ(rows.size(), 30u);

  ASSERT_EQ(cli({"split", p("f.csv"), "--seed", "3", "--out", p("m.json")}).code, 0);
  const auto manifest = load_manifest(p("m.json"));
  EXPECT_EQ(manifest.assignment.size(), 5u);
  EXPECT_TRUE(manifest.assignment.count("speaker0"));

  r = cli({"train", p("f.csv"), "--manifest", p("m.json"), "--model-kind", "mlp", "--hidden-units", "8", "--out",
           p("model.json")});
  ASSERT_EQ(r.code, 0) << r.err;

  r = cli({"evaluate", p("model.json"), p("f.csv"), "--manifest", p("m.json"), "--out", p("report.json"), "--roc",
           p("roc.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = load_report(p("report.json"));
  EXPECT_EQ(report.partition, "test");
  EXPECT_EQ(report.model_kind, "mlp");
  EXPECT_EQ(slurp(p("roc.csv")).rfind("fpr,tpr,threshold\n", 0), 0u);

  r = cli({"monitor", p("model.json"), p("corpus/FAKE/Speaker1-to-Target.wav"), "--policy", "m_of_k", "--k", "3",
           "--m", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
  EXPECT_EQ(r.out.rfind("{\"window\":0,", 0), 0u);
  EXPECT_NE(r.err.find("realtime_factor"), std::string::npos);
}

TEST_F(CliTest, MonitorRawPcmAndDecodeError) {
  std::ofstream(p("d.csv")) << tiny_csv();
  ASSERT_EQ(cli({"split", p("d.csv"), "--out", p("m.json")}).code, 0);
  ASSERT_EQ(cli({"train", p("d.csv"), "--manifest", p("m.json"), "--model-kind", "logreg", "--out", p("model.json"),
                 "--epochs", "10", "--patience", "5"})
                .code,
            0);
  const auto pcm = testing::to_pcm16(testing::sine(300.0, 2.0, 8000));
  std::vector<std::uint8_t> raw;
  for (auto s : pcm) testing::put_u16(raw, static_cast<std::uint16_t>(s));
  testing::write_file(dir / "a.pcm", raw);
  auto r = cli({"monitor", p("model.json"), p("a.pcm"), "--raw-rate", "8000"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);

  std::vector<std::uint8_t> junk(100, 7);
  testing::write_file(dir / "junk.wav", junk);
  r = cli({"monitor", p("model.json"), p("junk.wav")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("junk.wav"), std::string::npos);
  EXPECT_NE(r.err.find("byte offset"), std::string::npos) << r.err;
}

TEST_F(CliTest, Reproducible) {
  make_toy_corpus(dir / "corpus");
  std::vector<std::string> outputs;
  for (const std::string run : {"a", "b"}) {
    ASSERT_EQ(cli({"features", p("corpus"), "--out", p(run + "f.csv")}).code, 0);
    ASSERT_EQ(cli({"split", p(run + "f.csv"), "--out", p(run + "m.json")}).code, 0);
    ASSERT_EQ(cli({"train", p(run + "f.csv"), "--manifest", p(run + "m.json"), "--out", p(run + "model.json"),
                   "--hidden-units", "8"})
                  .code,
              0);
    ASSERT_EQ(cli({"evaluate", p(run + "model.json"), p(run + "f.csv"), "--manifest", p(run + "m.json"), "--out",
                   p(run + "r.json"), "--roc", p(run + "roc.csv")})
                  .code,
              0);
    const auto mon = cli({"monitor", p(run + "model.json"), p("corpus/REAL/Speaker2.wav")});
    ASSERT_EQ(mon.code, 0);
    outputs.push_back(strip_latency(mon.out));
  }
  for (const std::string file : {"f.csv", "m.json", "model.json", "r.json", "roc.csv"})
    EXPECT_EQ(slurp(p("a" + file)), slurp(p("b" + file))) << file;
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0].find("latency_ms"), std::string::npos);
}

}  // namespace
}  // namespace rvcguard
