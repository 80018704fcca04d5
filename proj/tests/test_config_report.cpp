#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "wflab/config.hpp"
#include "wflab/report.hpp"

using namespace wflab;

TEST_CASE("config parses key=value with comments and round-trips") {
    {
        std::ofstream f("test_cfg.cfg");
        f << "# experiment\n";
        f << "synth.num_sites=6   # trailing comment\n";
        f << "budget.R=0.25\n";
        f << "secret.key=hunter2\n";
        f << "\n";
    }
    auto c = ExperimentConfig::from_file("test_cfg.cfg");
    CHECK(c.get_int("synth.num_sites", 0) == 6);
    CHECK(c.get_double("budget.R", 0) == doctest::Approx(0.25));
    CHECK(c.secret_key() == "hunter2");
    CHECK(c.get("missing.key", "dflt") == "dflt");
    CHECK_THROWS_AS(c.require("missing.key"), ConfigError);

    c.save("test_cfg2.cfg");
    auto back = ExperimentConfig::from_file("test_cfg2.cfg");
    CHECK(back.kv == c.kv);
    CHECK(back.hash() == c.hash());
    std::remove("test_cfg.cfg");
    std::remove("test_cfg2.cfg");
}

TEST_CASE("config rejects malformed lines and missing files") {
    {
        std::ofstream f("test_cfg_bad.cfg");
        f << "this line has no equals sign\n";
    }
    CHECK_THROWS_AS(ExperimentConfig::from_file("test_cfg_bad.cfg"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_file("test_cfg_nope.cfg"), ConfigError);
    std::remove("test_cfg_bad.cfg");
}

TEST_CASE("typed config views apply defaults and validation") {
    ExperimentConfig c;
    auto spec = c.synth_spec(5);
    CHECK(spec.num_sites == 20);
    CHECK(spec.traces_per_site == 100);
    CHECK(spec.base_len == 1000);
    CHECK(spec.seed == 5);
    auto d = c.defense();
    CHECK(d.budget.R == doctest::Approx(0.30));
    CHECK(d.M_p == 10);
    CHECK(d.beta == doctest::Approx(0.2));
    c.kv["budget.epsilon"] = "0.5";  // epsilon >= R
    CHECK_THROWS_AS(c.defense(), PatchError);
}

TEST_CASE("key file loading") {
    {
        std::ofstream f("test_key.txt");
        f << "file-key\n";
    }
    ExperimentConfig c;
    c.kv["secret.key_file"] = "test_key.txt";
    CHECK(c.secret_key() == "file-key");
    std::remove("test_key.txt");
    CHECK_THROWS_AS(c.secret_key(), ConfigError);
}

TEST_CASE("run report machine form is byte stable") {
    RunReport a("cfg123", 7);
    a.add("attack", "protection", 0.8125);
    a.add("attack", "accuracy", 0.1875);
    a.add_text("defend", "target", "site004");
    RunReport b("cfg123", 7);
    b.add("attack", "protection", 0.8125);
    b.add("attack", "accuracy", 0.1875);
    b.add_text("defend", "target", "site004");
    CHECK(a.jsonl() == b.jsonl());
    CHECK(a.hash() == b.hash());

    RunReport c("cfg123", 8);
    c.add("attack", "protection", 0.8125);
    CHECK(c.hash() != a.hash());

    auto table = a.table();
    CHECK(table.find("protection") != std::string::npos);
    CHECK(table.find("site004") != std::string::npos);

    a.save("test_report");
    std::ifstream jf("test_report.jsonl");
    CHECK(jf.good());
    std::ifstream tf("test_report.txt");
    CHECK(tf.good());
    std::remove("test_report.jsonl");
    std::remove("test_report.txt");
}
