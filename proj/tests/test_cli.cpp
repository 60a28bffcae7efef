#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// stdout only; stderr is folded in when `merge` is set
Run cli(const std::string& args, bool merge = false) {
    std::string cmd = std::string(TREESHIFT_CLI) + " " + args + (merge ? " 2>&1" : " 2>/dev/null");
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string doc(const char* name) { return std::string(TREESHIFT_EXAMPLES_DIR) + "/" + name; }

nlohmann::json json_of(const std::string& args) {
    Run r = cli(args + " --json");
    REQUIRE(r.code == 0);
    return nlohmann::json::parse(r.out);
}

}  // namespace

TEST_CASE("validate summarizes every example document", "[cli]") {
    for (const char* name : {"binary.json", "unrooted_binary.json", "naturals.json", "rolewicz_binary.json",
                             "integers_capacity.json", "comb_spine_decay.json", "comb_tooth_decay.json",
                             "golden_half_comb.json", "mixing_powers.json", "finite_small.json", "hybrid_bare_leaf.json"}) {
        INFO(name);
        Run r = cli("validate " + doc(name));
        CHECK(r.code == 0);
        CHECK(r.out.find("results:") != std::string::npos);
    }
}

TEST_CASE("input errors exit with status 1 and a message", "[cli]") {
    Run malformed = cli("validate " + doc("malformed.json"), true);
    CHECK(malformed.code == 1);
    CHECK(malformed.out.find("malformed JSON") != std::string::npos);
    Run cyclic = cli("validate " + doc("finite_cyclic.json"), true);
    CHECK(cyclic.code == 1);
    CHECK(cyclic.out.find("cycle") != std::string::npos);
    CHECK(cli("validate " + doc("no_such_tree.json")).code == 1);
    CHECK(cli("constants " + doc("binary.json") + " --p 0.5").code == 1);
    CHECK(cli("classify " + doc("binary.json") + " --space hilbert").code == 1);
    CHECK(cli("flow " + doc("binary.json") + " --vertex 2:9").code == 1);
    CHECK(cli("validate " + doc("finite_small.json") + " --operator-weight").code == 1);
    CHECK(cli("frobnicate " + doc("binary.json")).code == 1);
}

TEST_CASE("budget problems exit with status 2", "[cli]") {
    Run r = cli("capacity " + doc("binary.json") + " --budget 0", true);
    CHECK(r.code == 2);
    CHECK(r.out.find("budget") != std::string::npos);
    CHECK(cli("constants " + doc("binary.json") + " --depth-budget 0").code == 2);
}

TEST_CASE("machine-readable reports are deterministic and match --out", "[cli]") {
    const std::string args = "constants " + doc("golden_half_comb.json") + " --json";
    Run a = cli(args);
    Run b = cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);

    auto path = std::filesystem::temp_directory_path() / "treeshift_cli_report.json";
    Run c = cli(args + " --out " + path.string());
    REQUIRE(c.code == 0);
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::filesystem::remove(path);
    CHECK(nlohmann::json::parse(ss.str())["results"] == nlohmann::json::parse(a.out)["results"]);
    CHECK(nlohmann::json::parse(a.out)["inputs_digest"].get<std::string>().rfind("fnv1a64:", 0) == 0);
}

TEST_CASE("constants of the golden half comb", "[cli]") {
    auto j = json_of("constants " + doc("golden_half_comb.json"));
    const auto& cf = j["results"]["continued_fraction"];
    double value = std::stod(cf["value"].get<std::string>());
    CHECK(value == Catch::Approx(0.78615137775742339).epsilon(1e-9));
}

TEST_CASE("classification verdicts through the command line", "[cli]") {
    auto rolewicz = json_of("classify " + doc("rolewicz_binary.json"));
    CHECK(rolewicz["results"]["chaotic"]["answer"] == "Yes");
    CHECK(rolewicz["results"]["rolewicz"]["answer"] == "Yes");

    auto spine = json_of("classify " + doc("comb_spine_decay.json") + " --p 1");
    CHECK(spine["results"]["chaotic"]["answer"] == "No");
    auto tooth = json_of("classify " + doc("comb_tooth_decay.json") + " --p 1");
    CHECK(tooth["results"]["chaotic"]["answer"] == "Yes");

    auto naturals = json_of("classify " + doc("naturals.json"));
    CHECK(naturals["results"]["hypercyclic"]["answer"] == "No");
}

TEST_CASE("capacity and flow commands", "[cli]") {
    auto number = [](const nlohmann::json& j) { return std::stod(j.get<std::string>()); };
    auto cap = json_of("capacity " + doc("unrooted_binary.json"))["results"];
    CHECK(number(cap["value"]["value"]) == Catch::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(number(cap["r_plus_power"]) == Catch::Approx(2.0).epsilon(1e-9));
    auto z = json_of("capacity " + doc("integers_capacity.json"))["results"];
    CHECK(number(z["value"]["value"]) == Catch::Approx(0.6).epsilon(1e-9));
    CHECK(z["spine_limit_status"] == "Exact");
    Run flow = cli("flow " + doc("binary.json") + " --steps 3");
    CHECK(flow.code == 0);
    CHECK(flow.out.find("0.5") != std::string::npos);
}

TEST_CASE("orbits of finitely supported vectors", "[cli]") {
    auto j = json_of("orbit " + doc("binary.json") + " --init \"2:0=1;2:1=2\" --steps 2");
    const auto& steps = j["results"]["steps"];
    REQUIRE(steps.size() == 3);
    CHECK(j.dump().find("0:0") != std::string::npos);
    CHECK(cli("orbit " + doc("binary.json") + " --init \"7:900=1\"").code == 1);
}

TEST_CASE("hybrid documents carry their warnings into the report", "[cli]") {
    auto j = json_of("validate " + doc("hybrid_bare_leaf.json"));
    REQUIRE(j.contains("warnings"));
    CHECK(j["warnings"].dump().find("leaf 2") != std::string::npos);
}
