#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <sstream>
#include <vector>

#include "gram/cli.hpp"
#include "gram/datagen.hpp"
#include "gram/errors.hpp"
#include "gram/util.hpp"

using namespace gram;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<const char*> args) {
  std::vector<const char*> argv{"gram"};
  argv.insert(argv.end(), args.begin(), args.end());
  return cli::dispatch(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"gen-corpus"}) == 2);                       // missing --out
  CHECK(run({"bon", "--k", "4", "--bogus-flag"}) == 2);  // unknown flag
  CHECK(run({}) == 2);                                   // no subcommand
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("corpus generation writes splits and a manifest") {
  TempDir dir("gram_cli_corpus");
  CHECK(run({"gen-corpus", "--out", dir.str().c_str(), "--seed", "3", "--pretrain", "8",
             "--finetune", "8", "--test-id", "4", "--test-ood", "4"}) == 0);
  CHECK(fs::exists(dir.path / "finetune.jsonl"));
  CHECK(fs::exists(dir.path / "manifest.json"));
  const auto recs = data::read_jsonl((dir.path / "finetune.jsonl").string());
  CHECK(recs.size() == 8);
}

TEST_CASE("a full tiny pipeline runs through the cli") {
  TempDir corpus("gram_cli_pipe_corpus");
  TempDir run1(
      "gram_cli_pipe_run");
  CHECK(run({"gen-corpus", "--out", corpus.str().c_str(), "--seed", "5", "--pretrain",
             "16", "--finetune", "16", "--test-id", "8", "--test-ood", "8"}) == 0);
  const std::string arch = "--set";
  CHECK(run({"pretrain", "--corpus", corpus.str().c_str(), "--out", run1.str().c_str(),
             "--seed", "5", "--set", "n_layers=1", "--set", "d_model=16", "--set",
             "context_len=128", "--set", "batch_size=8"}) == 0);
  CHECK(fs::exists(run1.path / "stage1.ckpt"));
  CHECK(fs::exists(run1.path / "run_manifest.txt"));
  CHECK(fs::exists(run1.path / "report.json"));
  const std::string init = (run1.path / "stage1.ckpt").string();
  CHECK(run({"finetune", "--corpus", corpus.str().c_str(), "--out", run1.str().c_str(),
             "--init", init.c_str(), "--seed", "5", "--set", "n_layers=1", "--set",
             "d_model=16", "--set", "context_len=128", "--set", "batch_size=8"}) == 0);
  const std::string ckpt = (run1.path / "stage2.ckpt").string();
  CHECK(run({"eval", "--corpus", corpus.str().c_str(), "--ckpt", ckpt.c_str(), "--out",
             run1.str().c_str()}) == 0);
  CHECK(fs::exists(run1.path / "eval.json"));
  // the input corpus is never mutated by downstream commands
  const std::string before =
      util::read_file((corpus.path / "finetune.jsonl").string());
  CHECK(run({"rank", "--ckpt", ckpt.c_str(), "--input", "ab", "--response", "aaaa",
             "--response", "bbbb", "--response", "abab"}) == 0);
  CHECK(run({"bon", "--k", "4", "--ckpt", ckpt.c_str(), "--input", "ab", "--seed",
             "9"}) == 0);
  CHECK(util::read_file((corpus.path / "finetune.jsonl").string()) == before);
}

TEST_CASE("missing corpus files exit with the integrity code") {
  TempDir out("gram_cli_missing");
  CHECK(run({"pretrain", "--corpus", "/nonexistent-dir", "--out", out.str().c_str()}) == 3);
  CHECK(run({"eval", "--corpus", "/nonexistent-dir", "--ckpt", "/nonexistent.ckpt"}) == 3);
}

TEST_CASE("verify-identities prints a pass line per suite") {
  std::ostringstream out;
  CHECK(cli::verify_identities(out));
  const std::string text = out.str();
  CHECK(text.find("FAIL") == std::string::npos);
  std::size_t passes = 0;
  for (std::size_t pos = 0; (pos = text.find("PASS", pos)) != std::string::npos; ++pos) {
    ++passes;
  }
  CHECK(passes == 4);
}

TEST_CASE("emit-curves builds one csv per recorded curve") {
  TempDir dir("gram_cli_curves");
  CHECK_THROWS_AS(cli::emit_curves(dir.str()), IntegrityError);  // nothing recorded
  util::write_file((dir.path / "points.jsonl").string(),
                   R"({"curve":"bon","kl_bon":0.0,"proxy_score":0.5,"oracle_score":0.1})"
                   "\n"
                   R"({"curve":"bon","kl_bon":4.5,"proxy_score":0.9,"oracle_score":0.3})"
                   "\n"
                   R"({"curve":"epsilon","epsilon":0.1,"id_acc":0.9,"ood_acc":0.7})"
                   "\n");
  cli::emit_curves(dir.str());
  const std::string bon = util::read_file((dir.path / "bon.csv").string());
  CHECK(bon.find("kl_bon,proxy_score,oracle_score") == 0);
  CHECK(std::count(bon.begin(), bon.end(), '\n') == 3);  // header + 2 points
  CHECK(fs::exists(dir.path / "epsilon.csv"));
  CHECK_FALSE(fs::exists(dir.path / "adapt.csv"));
  // unknown curves are integrity errors and leave no partial output
  util::write_file((dir.path / "points.jsonl").string(), R"({"curve":"nope","x":1})"
                                                         "\n");
  fs::remove(dir.path / "bon.csv");
  CHECK_THROWS_AS(cli::emit_curves(dir.str()), IntegrityError);
  CHECK_FALSE(fs::exists(dir.path / "bon.csv"));
}

TEST_CASE("kl values print for the paper's sample sizes") {
  CHECK(run({"bon", "--k", "244"}) == 0);
  CHECK(run({"bon", "--k", "1"}) == 0);
  CHECK(run({"bon", "--k", "0"}) == 2);  // contract violation maps to usage
}
