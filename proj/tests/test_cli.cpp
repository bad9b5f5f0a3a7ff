#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adah/hashindex.hpp"
#include "adah/io.hpp"

using namespace adah;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("adah_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Result run(const std::string& args) const {
    const std::string err_file = path("stderr.txt");
    const std::string cmd = std::string(ADAH_CLI_PATH) + " " + args + " 2>" + err_file;
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read(err_file);
    return r;
  }

  std::string read(const std::string& p) const {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  void write(const std::string& name, const std::string& text) const { io::write_file_atomic(path(name), text); }

  // A small but complete training config on CSV files from make-synthetic.
  std::string small_config(const std::string& extra = "") {
    EXPECT_EQ(run("make-synthetic --out " + path("syn") + " --per-class 30").code, 0);
    write("run.cfg",
          "data.kind=csv\ndata.source=syn/source.csv\ndata.target=syn/target.csv\n"
          "train.pretrain_epochs=2\ntrain.stages=2\ntrain.epochs_per_stage=3\ntrain.code_bits=64\n"
          "net.encoder_hidden=16\nnet.generator_hidden=16\nnet.discriminator_hidden=16\n" +
              extra);
    return path("run.cfg");
  }

  static std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

  fs::path dir_;
};

HashCode code4(const std::string& s) {
  std::vector<std::uint8_t> b;
  for (char c : s) b.push_back(c == '1');
  return HashCode::pack(b);
}

}  // namespace

TEST_F(Cli, MissingConfigExitsTwoNamingPath) {
  const auto r = run("train --config " + path("absent.cfg") + " --out " + path("o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(path("absent.cfg")), std::string::npos) << r.err;
}

TEST_F(Cli, BatchSizeNotAboveClassesExitsTwo) {
  const auto r = run("train --config " + small_config("train.batch_size=4\n") + " --out " + path("o"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("must be larger than the number of classes"), std::string::npos) << r.err;
}

TEST_F(Cli, UnknownFlagAndMissingCommandExitTwo) {
  EXPECT_EQ(run("train --config x --out y --bogus").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, TrainEncodeIndexEvaluate) {
  const auto r = run("train --config " + small_config() + " --out " + path("out"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines(read(path("out/metrics.csv"))), 1u + 2u * 3u);
  EXPECT_TRUE(fs::exists(path("out/stage_0.adah")));
  EXPECT_TRUE(fs::exists(path("out/stage_1.adah")));
  EXPECT_TRUE(fs::exists(path("out/model.adah")));

  const std::string model = " --model " + path("out/model.adah");
  ASSERT_EQ(run("encode" + model + " --data " + path("syn/source.csv") + " --out " + path("s.codes")).code, 0);
  ASSERT_EQ(run("encode" + model + " --data " + path("syn/target.csv") + " --id-offset 100000 --out " +
                path("t.codes")).code,
            0);
  const CodeFile s = load_codes(path("s.codes"));
  EXPECT_EQ(s.size(), 120u);
  EXPECT_EQ(s.bits, 64u);
  ASSERT_EQ(run("encode" + model + " --data " + path("syn/source.csv") + " --out " + path("s2.codes")).code, 0);
  EXPECT_EQ(read(path("s.codes")), read(path("s2.codes")));

  ASSERT_EQ(run("build-index --codes " + path("s.codes") + " --out " + path("idx.codes")).code, 0);
  EXPECT_EQ(run("build-index --codes " + path("s.codes") + " " + path("s.codes") + " --out " + path("x")).code, 2);
  const auto map = run("eval-map --index " + path("idx.codes") + " --queries " + path("t.codes"));
  EXPECT_EQ(map.code, 0);
  EXPECT_EQ(map.out.rfind("MAP=", 0), 0u);
  EXPECT_EQ(map.out.size(), std::string("MAP=0.000000\n").size());

  const auto q = run("query --index " + path("idx.codes") + " --queries " + path("t.codes") + " --k 3 --threads 2");
  EXPECT_EQ(q.code, 0);
  EXPECT_EQ(lines(q.out), 1u + 120u * 3u);

  const auto acc = run("eval-acc" + model + " --data " + path("syn/target.csv"));
  EXPECT_EQ(acc.code, 0);
  EXPECT_EQ(acc.out.rfind("accuracy=", 0), 0u);

  write("narrow.csv", "0.5,1\n0.25,0\n");
  const auto bad = run("encode" + model + " --data " + path("narrow.csv") + " --out " + path("n.codes"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("width 1"), std::string::npos) << bad.err;
  EXPECT_NE(bad.err.find("expects 2"), std::string::npos) << bad.err;

  write("nolabels.csv", "0.5,1.0\n0.25,0.0\n-1.0,0.5\n");
  ASSERT_EQ(run("export-embeddings" + model + " --data " + path("nolabels.csv") + " --unlabeled --out " +
                path("e.csv")).code,
            0);
  const std::string e = read(path("e.csv"));
  EXPECT_EQ(lines(e), 4u);
  const std::string header = e.substr(0, e.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ',') + 1, 66);
  std::istringstream rows(e);
  std::string row;
  std::getline(rows, row);
  while (std::getline(rows, row)) EXPECT_EQ(row.substr(row.find(',') + 1, 3), "-1,");
}

TEST_F(Cli, SeedFlagOverridesConfig) {
  const std::string cfg = small_config();
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("a") + " --seed 5").code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("b") + " --seed 5").code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --out " + path("c") + " --seed 6").code, 0);
  EXPECT_EQ(read(path("a/model.adah")), read(path("b/model.adah")));
  EXPECT_EQ(read(path("a/metrics.csv")), read(path("b/metrics.csv")));
  EXPECT_NE(read(path("a/model.adah")), read(path("c/model.adah")));
}

TEST_F(Cli, EvalMapFixtures) {
  CodeFile idx;
  idx.bits = 4;
  idx.ids = {0, 1, 2};
  idx.codes = {code4("0000"), code4("0011"), code4("0001")};
  idx.labels = {0, 1, 0};
  save_codes(path("idx.codes"), idx);
  CodeFile q;
  q.bits = 4;
  q.ids = {10, 11};
  q.codes = {code4("0000"), code4("0011")};
  q.labels = {1, 0};
  save_codes(path("q.codes"), q);
  EXPECT_EQ(run("eval-map --index " + path("idx.codes") + " --queries " + path("q.codes")).out, "MAP=0.458333\n");

  // Index queried by itself: self excluded, clusters perfect.
  CodeFile self;
  self.bits = 4;
  self.ids = {0, 1, 2, 3};
  self.codes = {code4("0000"), code4("0000"), code4("1111"), code4("1111")};
  self.labels = {0, 0, 1, 1};
  save_codes(path("self.codes"), self);
  EXPECT_EQ(run("eval-map --index " + path("self.codes") + " --queries " + path("self.codes")).out, "MAP=1.000000\n");

  CodeFile empty;
  empty.bits = 4;
  save_codes(path("empty.codes"), empty);
  EXPECT_EQ(run("eval-map --index " + path("empty.codes") + " --queries " + path("q.codes")).code, 2);

  CodeFile wide = q;
  wide.bits = 8;
  save_codes(path("wide.codes"), wide);
  EXPECT_EQ(run("eval-map --index " + path("idx.codes") + " --queries " + path("wide.codes")).code, 2);
}

TEST_F(Cli, CorruptCodeFileExitsTwo) {
  write("junk.codes", "not a code file");
  EXPECT_EQ(run("eval-map --index " + path("junk.codes") + " --queries " + path("junk.codes")).code, 2);
}

TEST_F(Cli, GradCheckPasses) {
  const auto r = run("grad-check --instances 2");
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("max_rel_error="), std::string::npos);
}

TEST_F(Cli, MakeSyntheticWritesBothDomains) {
  ASSERT_EQ(run("make-synthetic --out " + path("s") + " --per-class 10 --seed 3").code, 0);
  EXPECT_EQ(lines(read(path("s/source.csv"))), 41u);
  EXPECT_EQ(lines(read(path("s/target.csv"))), 41u);
}
