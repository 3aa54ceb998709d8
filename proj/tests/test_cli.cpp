// End-to-end checks of the command-line tool: each test shells out to the
// built binary (path injected via HIER_BIN) inside a fresh temp directory.

#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CmdResult run_cli(const std::string& args, const fs::path& dir) {
  fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  std::string cmd = std::string(HIER_BIN) + " " + args + " >" +
                    out.string() + " 2>" + err.string();
  int rc = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("hier_cli_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CmdResult cli(const std::string& args) { return run_cli(args, dir_); }

  // small nonseparable dataset so recalls land strictly inside (0,1)
  std::string gen_dataset() {
    auto r = cli("gen-data --out " + (dir_ / "data").string() +
                 " --seed 9 --set gen_depth=3 --set gen_branching=2"
                 " --set gen_classes=8 --set gen_samples_per_class=12"
                 " --set gen_feature_dim=8 --set gen_cluster_spread=1.0");
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return (dir_ / "data" / "synthetic.features").string();
  }

  std::string small_train_flags(const std::string& data) {
    return " --set dataset=" + data +
           " --set epochs=2 --set proxy_count=8 --set hidden_dim=16"
           " --set embed_dim=8 --set K=3 --set batch_size=16"
           " --set lr=0.001 --seed 11";
  }

  fs::path dir_;
};

TEST_F(CliTest, UnknownConfigKeyRejected) {
  auto r = cli("train --set dataset=x --set bogus=1");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("unknown key 'bogus'"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingDatasetNamesTheField) {
  auto r = cli("train --set epochs=1");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("dataset"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadSetSyntaxRejected) {
  auto r = cli("train --set lambda");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("key=value"), std::string::npos) << r.err;
}

TEST_F(CliTest, GradcheckPassesAndIsDeterministic) {
  auto a = cli("gradcheck --seed 4");
  EXPECT_EQ(a.exit_code, 0) << a.err;
  EXPECT_NE(a.out.find("gradcheck: PASS"), std::string::npos);
  auto b = cli("gradcheck --seed 4");
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, EvalReproducesFinalTrainRecall) {
  std::string data = gen_dataset();
  auto tr = cli("train" + small_train_flags(data) + " --out " +
                (dir_ / "run").string());
  ASSERT_EQ(tr.exit_code, 0) << tr.err;
  json summary = json::parse(tr.out);
  ASSERT_FALSE(summary["final_test_recall@1"].is_null());
  double final_r1 = summary["final_test_recall@1"].get<double>();
  EXPECT_GT(final_r1, 0.0);
  EXPECT_LT(final_r1, 1.0);  // spread chosen so retrieval is imperfect

  auto ev = cli("eval --checkpoint " +
                (dir_ / "run" / "checkpoint_final.bin").string());
  ASSERT_EQ(ev.exit_code, 0) << ev.err;
  json rep = json::parse(ev.out);
  EXPECT_EQ(rep["recall@1"].get<double>(), final_r1);
  EXPECT_TRUE(rep["dasgupta_cost"].is_number());
  EXPECT_TRUE(rep["dasgupta_random_mean"].is_number());
}

TEST_F(CliTest, TrainIsDeterministicAcrossInvocations) {
  std::string data = gen_dataset();
  std::string invocation =
      "train" + small_train_flags(data) + " --out " + (dir_ / "x").string();
  auto a = cli(invocation);
  ASSERT_EQ(a.exit_code, 0) << a.err;
  fs::rename(dir_ / "x", dir_ / "first");
  auto b = cli(invocation);
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(dir_ / "first" / "metrics.ndjson"),
            slurp(dir_ / "x" / "metrics.ndjson"));
  EXPECT_EQ(slurp(dir_ / "first" / "checkpoint_final.bin") ==
                slurp(dir_ / "x" / "checkpoint_final.bin"),
            true);
}

TEST_F(CliTest, SweepEchoesValuesVerbatim) {
  std::string data = gen_dataset();
  auto r = cli("sweep --param lambda --values 0,0.50" +
               small_train_flags(data) + " --set epochs=1");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string header, row0, row1;
  std::getline(lines, header);
  std::getline(lines, row0);
  std::getline(lines, row1);
  EXPECT_EQ(header, "param,value,recall@1");
  EXPECT_EQ(row0.rfind("lambda,0,", 0), 0u) << row0;
  EXPECT_EQ(row1.rfind("lambda,0.50,", 0), 0u) << row1;
}

TEST_F(CliTest, SweepRejectsUnknownParam) {
  auto r = cli("sweep --param r --values 1 --set dataset=x");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("param must be one of"), std::string::npos);
}

TEST_F(CliTest, ExportWritesArtifacts) {
  std::string data = gen_dataset();
  auto tr = cli("train" + small_train_flags(data) + " --out " +
                (dir_ / "run").string());
  ASSERT_EQ(tr.exit_code, 0) << tr.err;
  auto ex = cli("export --checkpoint " +
                (dir_ / "run" / "checkpoint_final.bin").string() + " --out " +
                (dir_ / "exp").string());
  ASSERT_EQ(ex.exit_code, 0) << ex.err;
  for (const char* f :
       {"embeddings.features", "tree_edges.txt", "affinity.csv",
        "config.json"})
    EXPECT_TRUE(fs::exists(dir_ / "exp" / f)) << f;
  json echoed = json::parse(slurp(dir_ / "exp" / "config.json"));
  EXPECT_EQ(echoed["seed"].get<long long>(), 11);
}

TEST_F(CliTest, CorruptCheckpointFailsCleanly) {
  std::ofstream(dir_ / "bad.bin") << "not a checkpoint";
  auto r = cli("eval --checkpoint " + (dir_ / "bad.bin").string());
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("checkpoint"), std::string::npos) << r.err;
}

}  // namespace
