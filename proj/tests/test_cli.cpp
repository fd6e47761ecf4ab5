#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int rc = -1;
  std::string out;
};

Run run(const std::string& args) {
  std::string cmd = std::string(STEIN_CLI_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, k);
  int st = pclose(p);
  r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() / ("stein_cli_" + std::to_string(::getpid()) + "_" +
                                       ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::string write(const std::string& name, const std::string& text) {
    auto p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> f(1);
  bool q = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (q) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        f.back() += '"';
        ++i;
      } else if (c == '"') {
        q = false;
      } else {
        f.back() += c;
      }
    } else if (c == '"') {
      q = true;
    } else if (c == ',') {
      f.emplace_back();
    } else {
      f.back() += c;
    }
  }
  return f;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(split_csv_line(line));
  return rows;
}

const char* kHeader = "experiment_id,coupling,n,seed,metric,value,ci,bound,flags,version,config";

}  // namespace

TEST_F(Cli, SelftestPasses) {
  auto r = run("selftest");
  EXPECT_EQ(r.rc, 0);
  EXPECT_NE(r.out.find("selftest: "), std::string::npos);
  EXPECT_NE(r.out.find(" 0 failed"), std::string::npos);
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").rc, 2);
  EXPECT_EQ(run("frobnicate").rc, 2);
  EXPECT_EQ(run("run " + (dir / "missing.json").string()).rc, 2);
  EXPECT_EQ(run("run " + write("bad.json", "{not json")).rc, 2);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  EXPECT_EQ(run("run " + write("noseed.json", R"({"tasks": {"recursion": {"n": 4}}})")).rc, 2);
  EXPECT_EQ(run("run " + write("notasks.json", R"({"seed": 1})")).rc, 2);
  EXPECT_EQ(run("run " + write("unknown.json",
                               R"({"seed": 1, "coupling": {"name": "two_runs", "n": 5, "p": 0.5, "bogus": 1},
                                   "tasks": {"moments": {}}})"))
                .rc,
            2);
  EXPECT_EQ(run("run " + write("badname.json", R"({"seed": 1, "coupling": {"name": "nope"}, "tasks": {"moments": {}}})")).rc,
            2);
}

TEST_F(Cli, GeometryRadiusBelowMinimumIsUnavailable) {
  auto r = run("run " + write("geom.json", R"({"seed": 1, "n_samples": 1000,
      "coupling": {"name": "geometry", "d": 2, "n": 100, "rho": 0.3, "pilot_samples": 2000},
      "tasks": {"bounds": {"theorems": ["application"]}}})"));
  ASSERT_EQ(r.rc, 0);
  auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][4], "bound:application");
  EXPECT_EQ(rows[1][5], "");  // NaN is written as an empty field
  EXPECT_NE(rows[1][8].find("unavailable"), std::string::npos);
}

TEST_F(Cli, RecursionJson) {
  auto r = run("run " + write("rec.json", R"({"experiment_id": "rec", "seed": 1,
      "tasks": {"recursion": {"problem": "iid", "gamma": 1, "n": 100}}, "output": {"format": "json"}})"));
  ASSERT_EQ(r.rc, 0);
  auto j = nlohmann::json::parse(r.out);
  ASSERT_TRUE(j.contains("kappa_bound"));
  EXPECT_NEAR(j["kappa_bound"].get<double>(), 2.4725, 1e-3);
  EXPECT_LE(j["kappa_bound"].get<double>(), 2.5);
}

TEST_F(Cli, HoeffdingCsvBoundDominatesDistance) {
  auto cfg = write("h.json", R"({"experiment_id": "h", "seed": 3, "n_samples": 20000,
      "coupling": {"name": "hoeffding_variant1", "n": 6, "matrix_seed": 2},
      "tasks": {"bounds": {"theorems": ["application"]}, "distance": ["dk", "dw"]}})");
  auto r = run("run " + cfg);
  ASSERT_EQ(r.rc, 0);
  auto rows = parse_csv(r.out);
  ASSERT_GE(rows.size(), 3u);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), kHeader);
  bool saw_dk = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 11u);
    EXPECT_EQ(rows[i][0], "h");
    EXPECT_EQ(rows[i][3], "3");
    if (rows[i][4] == "distance:dk") {
      saw_dk = true;
      ASSERT_FALSE(rows[i][7].empty());
      EXPECT_GE(std::stod(rows[i][7]), std::stod(rows[i][5]));
    }
  }
  EXPECT_TRUE(saw_dk);
  // same seed, same bytes
  EXPECT_EQ(run("run " + cfg).out, r.out);
  EXPECT_EQ(run("--workers 3 run " + cfg).out, r.out);
}

TEST_F(Cli, OutputToFile) {
  auto out = (dir / "o.csv").string();
  auto r = run("run " + write("m.json", R"({"seed": 2, "coupling": {"name": "two_runs", "n": 6, "p": 0.5},
      "tasks": {"moments": {}}, "output": {"path": ")" + out + R"("}})"));
  ASSERT_EQ(r.rc, 0);
  EXPECT_TRUE(r.out.empty());
  std::ifstream f(out);
  std::string first;
  std::getline(f, first);
  EXPECT_EQ(first, kHeader);
}

TEST_F(Cli, SweepEmptyGridIsHeaderOnly) {
  auto t = write("t.json", R"({"seed": 1, "coupling": {"name": "two_runs", "n": 6, "p": 0.5}, "tasks": {"moments": {}}})");
  auto r = run("sweep " + t + " " + write("g.json", "{}"));
  ASSERT_EQ(r.rc, 0);
  EXPECT_EQ(r.out, std::string(kHeader) + "\n");
}

TEST_F(Cli, SweepLongFormat) {
  auto t = write("t.json", R"({"seed": 1, "coupling": {"name": "two_runs", "n": 6, "p": 0.5}, "tasks": {"moments": {}}})");
  auto r = run("sweep " + t + " " + write("g.json", R"({"coupling.n": [5, 7], "coupling.p": [0.3, 0.6]})"));
  ASSERT_EQ(r.rc, 0);
  auto rows = parse_csv(r.out);
  std::set<std::string> ns;
  for (std::size_t i = 1; i < rows.size(); ++i) ns.insert(rows[i][2]);
  EXPECT_EQ(ns, (std::set<std::string>{"5", "7"}));
  auto seeds = run("sweep " + t + " " + write("s.json", R"({"coupling.n": [5], "_seeds": [1, 2, 3]})"));
  ASSERT_EQ(seeds.rc, 0);
  EXPECT_NE(seeds.out.find("median"), std::string::npos);
}

TEST_F(Cli, ListCouplings) {
  auto r = run("list-couplings --json");
  ASSERT_EQ(r.rc, 0);
  auto j = nlohmann::json::parse(r.out);
  std::set<std::string> names;
  for (const auto& e : j) names.insert(e["name"].get<std::string>());
  for (const char* n : {"two_runs", "curie_weiss", "hoeffding_variant3", "occupancy", "geometry", "graph", "size_bias_binomial"})
    EXPECT_TRUE(names.count(n)) << n;
  EXPECT_EQ(run("list-couplings").rc, 0);
}
