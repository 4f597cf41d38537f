// End-to-end checks of the command-line tool: spawns the built binary
// (path in RATENET_CLI) against small configs and inspects the outputs.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("RATENET_CLI");
    REQUIRE_MESSAGE(env != nullptr, "RATENET_CLI must point at the built binary");
    return env;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE_MESSAGE(in.good(), ("missing output file " + p.string()).c_str());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("ratenet_cli_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_config(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

const char* kTwoPopConfig = R"json({
  "model": {
    "populations": [
      {"tau": 1.0, "gain": 1.0, "threshold": 0.0, "noise": 1.2, "input": 0.0, "fraction": 0.5},
      {"tau": 1.0, "gain": 1.0, "threshold": 0.0, "noise": 1.2, "input": -3.0, "fraction": 0.5}
    ],
    "connectivity": [[15.0, -12.0], [16.0, -5.0]],
    "label": "two-population-ei"
  },
  "sim": {"n_total": 200, "dt": 0.01, "t_end": 2.0, "n_realizations": 2, "seed": 42,
          "record_mode": "population_stats", "record_stride": 5},
  "ode": {"t_end": 2.0},
  "init": {"mean": 0.5, "variance": 1.0}
})json";

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("simulate-net is byte-deterministic across reruns and thread counts") {
    const auto dir = fresh_dir("determinism");
    write_config(dir / "config.json", kTwoPopConfig);
    const auto out1 = dir / "run1";
    const auto out2 = dir / "run2";
    const auto out3 = dir / "run3";
    REQUIRE(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
                out1.string()) == 0);
    REQUIRE(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
                out2.string()) == 0);
    REQUIRE(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
                out3.string() + " --threads 2") == 0);
    CHECK(slurp(out1 / "stats.csv") == slurp(out2 / "stats.csv"));
    CHECK(slurp(out1 / "stats.csv") == slurp(out3 / "stats.csv"));
    CHECK(slurp(out1 / "final.csv") == slurp(out2 / "final.csv"));
    CHECK(slurp(out1 / "final.csv") == slurp(out3 / "final.csv"));
}

TEST_CASE("csv outputs carry a comment header and strict rows") {
    const auto dir = fresh_dir("headers");
    write_config(dir / "config.json", kTwoPopConfig);
    REQUIRE(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
                dir.string()) == 0);
    const std::string text = slurp(dir / "stats.csv");
    CHECK(text.rfind("# tool: ratenet", 0) == 0);
    CHECK(text.find("# seed: 42") != std::string::npos);
    // first non-comment line is the column header
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line) && !line.empty() && line[0] == '#') {
    }
    CHECK(line == "t,population,emp_mean,emp_var");
    // every remaining line has exactly 3 commas
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        CHECK(std::count(line.begin(), line.end(), ',') == 3);
        rows++;
    }
    CHECK(rows > 0);
}

TEST_CASE("invalid configuration exits nonzero") {
    const auto dir = fresh_dir("invalid");
    write_config(dir / "config.json", kTwoPopConfig);
    CHECK(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
              dir.string() + " --override sim.n_total=0") != 0);
    // memory-cap refusal propagates as a failure too
    CHECK(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
              dir.string() +
              " --override sim.record_mode=full_trajectories"
              " --override sim.memory_cap_bytes=1024") != 0);
}

TEST_CASE("simulate-mf writes moments matching the closed-form variance") {
    const auto dir = fresh_dir("mf");
    write_config(dir / "config.json", kTwoPopConfig);
    REQUIRE(run("simulate-mf --config " + (dir / "config.json").string() + " --out " +
                dir.string()) == 0);
    const std::string text = slurp(dir / "moments.csv");
    std::istringstream in(text);
    std::string line;
    bool checked = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("t,", 0) == 0)
            continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        double t, pop, mu, v;
        row >> t >> pop >> mu >> v;
        const double v_expect =
            0.72 + std::exp(-2.0 * t) * (1.0 - 0.72);  // tau lambda^2/2 = 0.72
        CHECK(std::abs(v - v_expect) < 1e-6);
        checked = true;
    }
    CHECK(checked);
}

TEST_CASE("sweep census over a single cell") {
    const auto dir = fresh_dir("sweep");
    std::string config = kTwoPopConfig;
    config.insert(config.rfind('}'), R"json(,
  "sweep": {"mode": "census",
    "axis1": {"name": "lambda", "lo": 1.5, "hi": 1.5, "n": 1},
    "axis2": {"name": "I1", "lo": 0.0, "hi": 0.0, "n": 1},
    "init_set": [{"mean": [0.5, 0.5], "variance": [1.0, 1.0]},
                 {"mean": [4.0, 4.0], "variance": [1.0, 1.0]}]}
)json");
    write_config(dir / "config.json", config);
    REQUIRE(run("sweep --config " + (dir / "config.json").string() + " --out " + dir.string()) ==
            0);
    const std::string text = slurp(dir / "census.csv");
    CHECK(text.find("oscillation") != std::string::npos);
    CHECK(fs::exists(dir / "bifurcations.json"));
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("spectrum rejects an empty lambda list") {
    const auto dir = fresh_dir("spectrum");
    std::string config = kTwoPopConfig;
    config.insert(config.rfind('}'), R"json(, "spectrum": {"lambdas": []})json");
    write_config(dir / "config.json", config);
    CHECK(run("spectrum --config " + (dir / "config.json").string() + " --out " + dir.string()) !=
          0);
}

TEST_CASE("override flags win over config values") {
    const auto dir = fresh_dir("override");
    write_config(dir / "config.json", kTwoPopConfig);
    REQUIRE(run("simulate-net --config " + (dir / "config.json").string() + " --out " +
                dir.string() + " --seed 7 --override sim.t_end=0.5") == 0);
    const std::string manifest = slurp(dir / "manifest.json");
    CHECK(manifest.find("\"seed\": 7") != std::string::npos);
    CHECK(manifest.find("\"t_end\": 0.5") != std::string::npos);
}

TEST_SUITE_END();
