#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphmerge/ingest.hpp"
#include "graphmerge/model.hpp"
#include "graphmerge/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphmerge;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
CliRun run(const std::string& args) {
  const std::string cmd = std::string(GRAPHMERGE_CLI) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("graphmerge_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Toy corpus: sentence 1 is the three-token A/B example.
  void write_toy() {
    std::ofstream(dir_ / "toy.jsonl")
        << R"({"tokens":["t1","t2","t3"],"aspect_start":1,"aspect_len":1,"label":"positive","opinion_spans":[[3]],"group_id":"g1"})"
        << "\n"
        << R"({"tokens":["t1","t2","t3"],"aspect_start":1,"aspect_len":1,"label":"positive","opinion_spans":[[3]],"group_id":"g1"})"
        << "\n"
        << R"({"tokens":["good","food"],"aspect_start":2,"aspect_len":1,"label":"negative","opinion_spans":[[1]]})"
        << "\n";
    auto line = [](int id, const std::string& form, int head) {
      return std::to_string(id) + "\t" + form + "\t_\t_\t_\t_\t" + std::to_string(head) + "\t_\t_\t_\n";
    };
    std::ofstream(dir_ / "A.conllu") << line(1, "t1", 2) << line(2, "t2", 0) << line(3, "t3", 2) << "\n"
                                     << line(1, "t1", 2) << line(2, "t2", 0) << line(3, "t3", 2) << "\n"
                                     << line(1, "good", 2) << line(2, "food", 0) << "\n";
    std::ofstream(dir_ / "B.conllu") << line(1, "t1", 2) << line(2, "t2", 3) << line(3, "t3", 0) << "\n"
                                     << line(1, "t1", 2) << line(2, "t2", 3) << line(3, "t3", 0) << "\n"
                                     << line(1, "good", 0) << line(2, "food", 1) << "\n";
  }

  std::string toy_args() const {
    return "--dataset " + (dir_ / "toy.jsonl").string() + " --parses " + (dir_ / "A.conllu").string() + "," +
           (dir_ / "B.conllu").string();
  }

  void write_synth(int n) {
    ASSERT_EQ(run("synth --out " + (dir_ / "syn").string() + " --n " + std::to_string(n) + " --seed 5").code, 0);
  }

  std::string synth_parses() const {
    const fs::path s = dir_ / "syn";
    return (s / "parser1.conllu").string() + "," + (s / "parser2.conllu").string() + "," +
           (s / "parser3.conllu").string();
  }

  void write_config(const std::string& extra) {
    std::ofstream(dir_ / "cfg.json") << R"({"dataset":"syn/dataset.jsonl",)"
                                     << R"("parses":["syn/parser1.conllu","syn/parser2.conllu","syn/parser3.conllu"],)"
                                     << R"("learning_rate":0.01,"embed_dim":16,"dev_fraction":0.2)" << extra << "}";
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("merge --dataset x.jsonl").code, 1);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, MergeToyCorpusStats) {
  write_toy();
  const CliRun r = run("merge " + toy_args() + " --stats " + (dir_ / "stats.json").string() + " --dot " +
                    (dir_ / "dot").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const json stats = json::parse(read_file(dir_ / "stats.json"));
  EXPECT_EQ(stats["mode"], "union");
  EXPECT_EQ(stats["sentences"][0]["edge_count"], 9);
  EXPECT_EQ(stats["sentences"][0]["by_type"]["self_loop"], 3);
  EXPECT_EQ(stats["sentences"][0]["diameter"], 2);
  EXPECT_TRUE(fs::exists(dir_ / "dot" / "sentence_1.dot"));
  EXPECT_NE(read_file(dir_ / "dot" / "sentence_3.dot").find("digraph"), std::string::npos);

  const CliRun inter = run("merge " + toy_args() + " --mode intersect");
  ASSERT_EQ(inter.code, 0) << inter.out;
  EXPECT_EQ(json::parse(inter.out)["sentences"][0]["edge_count"], 5);
}

TEST_F(CliTest, DataErrorsExitTwoAndNameTheFile) {
  write_toy();
  std::ofstream(dir_ / "bad.conllu") << "1\tt1\t_\t_\t_\t_\tX\t_\t_\t_\n";
  const CliRun r = run("merge --dataset " + (dir_ / "toy.jsonl").string() + " --parses " + (dir_ / "bad.conllu").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("bad.conllu"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("line 1"), std::string::npos) << r.out;

  const CliRun missing = run("merge --dataset " + (dir_ / "nope.jsonl").string() + " --parses " +
                          (dir_ / "A.conllu").string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.out.find("nope.jsonl"), std::string::npos);
}

TEST_F(CliTest, TrainWithZeroEpochsWritesInitialization) {
  write_synth(30);
  write_config(R"(,"epochs":0,"checkpoint":"out/init.ckpt","metrics":"out/m.jsonl")");
  const CliRun r = run("train --config " + (dir_ / "cfg.json").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(read_file(dir_ / "out" / "m.jsonl"), "");

  const Checkpoint ck = load_checkpoint(dir_ / "out" / "init.ckpt");
  EXPECT_EQ(ck.meta["best_epoch"], 0);
  TrainConfig cfg;
  for (const auto& [k, v] : ck.meta["train_config"].items()) ASSERT_TRUE(apply_setting(cfg, k, v));
  const auto corpus = load_corpus(dir_ / "syn" / "dataset.jsonl", {{"parser1", dir_ / "syn" / "parser1.conllu"},
                                                                    {"parser2", dir_ / "syn" / "parser2.conllu"},
                                                                    {"parser3", dir_ / "syn" / "parser3.conllu"}});
  TrainResult direct = train(cfg, corpus);
  const auto a = direct.params.all_parameters();
  const auto b = ck.params.all_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
}

TEST_F(CliTest, TrainEvalRoundTrip) {
  write_synth(60);
  write_config(R"(,"epochs":3,"checkpoint":"out/m.ckpt","metrics":"out/m.jsonl")");
  const CliRun r = run("train --config " + (dir_ / "cfg.json").string() + " --override batch_size=8 --seed 3");
  ASSERT_EQ(r.code, 0) << r.out;
  const json summary = json::parse(r.out);
  const std::string metrics = read_file(dir_ / "out" / "m.jsonl");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);

  const Checkpoint ck = load_checkpoint(dir_ / "out" / "m.ckpt");
  EXPECT_EQ(ck.meta["train_config"]["batch_size"], 8);
  EXPECT_EQ(ck.meta["train_config"]["seed"], 3);

  const std::string data = "--dataset " + (dir_ / "syn" / "dataset.jsonl").string() + " --parses " + synth_parses();
  const CliRun ev = run("eval --checkpoint " + (dir_ / "out" / "m.ckpt").string() + " " + data + " --split dev");
  ASSERT_EQ(ev.code, 0) << ev.out;
  const json report = json::parse(ev.out);
  EXPECT_EQ(report["accuracy"], summary["best_dev_acc"]);
  EXPECT_EQ(report["n"], 12);

  const CliRun ens = run("eval --label-ensemble " + (dir_ / "out" / "m.ckpt").string() + "," +
                      (dir_ / "out" / "m.ckpt").string() + " " + data + " --ars --report " +
                      (dir_ / "report.json").string() + " --predictions-out " + (dir_ / "pred.json").string());
  ASSERT_EQ(ens.code, 0) << ens.out;
  const json ens_report = json::parse(read_file(dir_ / "report.json"));
  EXPECT_EQ(ens_report["ensemble_size"], 2);
  EXPECT_EQ(ens_report["units"], 60);
  EXPECT_EQ(ens_report["ars"], ens_report["accuracy"]);

  const CliRun hops = run("analyze-hops " + data + " --mode single:parser1 --predictions " + (dir_ / "pred.json").string());
  ASSERT_EQ(hops.code, 0) << hops.out;
  const json h = json::parse(hops.out);
  EXPECT_EQ(h["n"], 60);
  EXPECT_TRUE(h["accuracy_by_hop"].contains("by_hop"));
}

TEST_F(CliTest, TrainRejectsUnknownConfigKey) {
  write_synth(10);
  write_config(R"(,"epochs":0,"learning_rat":0.1)");
  const CliRun r = run("train --config " + (dir_ / "cfg.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("learning_rat"), std::string::npos) << r.out;
}

TEST_F(CliTest, EvalArsGroupsByGroupId) {
  write_toy();
  std::ofstream(dir_ / "cfg.json") << R"({"dataset":"toy.jsonl","parses":["A.conllu","B.conllu"],"epochs":0,)"
                                   << R"("dev_fraction":0.0,"checkpoint":"m.ckpt","metrics":"m.jsonl"})";
  ASSERT_EQ(run("train --config " + (dir_ / "cfg.json").string()).code, 0);
  const CliRun ev = run("eval --checkpoint " + (dir_ / "m.ckpt").string() + " " + toy_args() + " --ars");
  ASSERT_EQ(ev.code, 0) << ev.out;
  EXPECT_EQ(json::parse(ev.out)["units"], 2);
}

TEST_F(CliTest, AnalyzeHopsHistogram) {
  write_toy();
  const CliRun r = run("analyze-hops " + toy_args() + " --mode union");
  ASSERT_EQ(r.code, 0) << r.out;
  const json h = json::parse(r.out);
  EXPECT_EQ(h["histogram"]["2"], 2);
  EXPECT_EQ(h["histogram"]["1"], 1);
  const CliRun single = run("analyze-hops " + toy_args() + " --mode single:B");
  EXPECT_EQ(json::parse(single.out)["histogram"]["2"], 2);
  EXPECT_EQ(run("analyze-hops " + toy_args() + " --mode feature").code, 2);
}

TEST_F(CliTest, SynthIsDeterministic) {
  ASSERT_EQ(run("synth --out " + (dir_ / "a").string() + " --n 50 --seed 9").code, 0);
  ASSERT_EQ(run("synth --out " + (dir_ / "b").string() + " --n 50 --seed 9").code, 0);
  for (const char* f : {"dataset.jsonl", "parser1.conllu", "parser3.conllu", "gold.conllu"})
    EXPECT_EQ(read_file(dir_ / "a" / f), read_file(dir_ / "b" / f)) << f;
  EXPECT_EQ(run("synth --out " + (dir_ / "c").string() + " --rewire 1.5").code, 2);
}
