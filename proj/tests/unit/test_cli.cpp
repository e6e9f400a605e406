#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / ("sfd_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

// Runs the CLI with stdout/stderr captured; returns the exit status.
int sfd(const std::string& args, std::string* out = nullptr) {
  const auto log = fs::temp_directory_path() / ("sfd_cli_out_" + std::to_string(::getpid()));
  const std::string cmd = std::string(SFD_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  if (out) {
    std::ifstream is(log);
    std::stringstream ss;
    ss << is.rdbuf();
    *out = ss.str();
  }
  fs::remove(log);
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit 2, runtime errors exit 1") {
  Scratch tmp;
  CHECK(sfd("--help") == 0);
  CHECK(sfd("train --help") == 0);
  CHECK(sfd("frobnicate") == 2);
  CHECK(sfd("run --model x.sfd") == 2);
  CHECK(sfd("train --data d.jsonl --out m.sfd --epochs 0") == 2);
  std::string out;
  CHECK(sfd("run --scenario S010 --model " + (tmp / "missing.sfd"), &out) == 1);
  CHECK(out.find("error:") != std::string::npos);
  CHECK(sfd("run --scenario " + (tmp / "missing.json") + " --model x.sfd") == 1);
}

TEST_CASE("parse-corpus matches the pinned verdicts") {
  std::string out;
  CHECK(sfd(std::string("parse-corpus ") + SFD_FIXTURE_DIR + "/appendixD", &out) == 0);
  CHECK(out.find("MISMATCH") == std::string::npos);
  CHECK(out.find("llava-llama2_left-image_naive.txt\tRIGHT\tok") != std::string::npos);
}

TEST_CASE("collect, train, run and eval are byte-reproducible") {
  Scratch tmp;
  const std::string data = tmp / "demos.jsonl";
  REQUIRE(sfd("collect --scenario S010 --routes 6 --out " + data + " --seed 3") == 0);
  const std::string data2 = tmp / "demos2.jsonl";
  REQUIRE(sfd("collect --scenario S010 --routes 6 --out " + data2 + " --seed 3") == 0);
  CHECK(slurp(data) == slurp(data2));

  const std::string m1 = tmp / "a.sfd", m2 = tmp / "b.sfd";
  REQUIRE(sfd("train --data " + data + " --out " + m1 + " --epochs 2 --seed 7") == 0);
  REQUIRE(sfd("train --data " + data + " --out " + m2 + " --epochs 2 --seed 7 --threads 3") == 0);
  CHECK(slurp(m1) == slurp(m2));
  CHECK(slurp(m1 + ".loss.csv") == slurp(m2 + ".loss.csv"));
  CHECK(slurp(m1 + ".loss.csv").rfind("epoch,loss\n", 0) == 0);

  std::string o1, o2;
  REQUIRE(sfd("run --scenario builtin:ZIGZAG --model " + m1 + " --planner oracle --latency 7.76 --max-ticks 300 --trace " +
                  (tmp / "t1.jsonl"),
              &o1) == 0);
  REQUIRE(sfd("run --scenario builtin:ZIGZAG --model " + m1 + " --planner oracle --latency 7.76 --max-ticks 300 --trace " +
                  (tmp / "t2.jsonl"),
              &o2) == 0);
  CHECK(o1 == o2);
  CHECK(o1.find("\"termination\"") != std::string::npos);
  CHECK(slurp(tmp / "t1.jsonl") == slurp(tmp / "t2.jsonl"));

  {
    std::ofstream plan(tmp / "plan.json");
    plan << R"({"scenarios": ["S010"], "models": [{"source": "self_sampled"}, {"backend": "oracle"}],
               "trials": 2, "max_ticks": 200})";
  }
  REQUIRE(sfd("eval --plan " + (tmp / "plan.json") + " --model " + m1 + " --format csv --out " + (tmp / "r1.csv")) == 0);
  REQUIRE(sfd("eval --plan " + (tmp / "plan.json") + " --model " + m1 + " --format csv --out " + (tmp / "r2.csv")) == 0);
  CHECK(slurp(tmp / "r1.csv") == slurp(tmp / "r2.csv"));
  CHECK(slurp(tmp / "r1.csv").rfind("scenario,source,backend", 0) == 0);
}
