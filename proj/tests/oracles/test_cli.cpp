#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "boltpipe/config.hpp"
#include "boltpipe/pipeline.hpp"
#include "boltpipe/ply.hpp"
#include "boltpipe/report.hpp"
#include "boltpipe/synth.hpp"
#include "support.hpp"

#ifndef BOLTPIPE_EXE
#error "BOLTPIPE_EXE must name the command-line binary"
#endif

using namespace boltpipe;
namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

segnet::ArchConfig toy_arch() {
    segnet::ArchConfig a;
    a.k = 5;
    a.tnet_edge = {8, 8};
    a.tnet_point = 8;
    a.tnet_fc = {8};
    a.edge_widths = {8, 8, 8};
    a.agg = 8;
    a.head = {8, 8};
    return a;
}

int run_cli(const std::string& args, const std::string& log) {
    const std::string cmd = std::string(BOLTPIPE_EXE) + " --quiet " + args + " > " + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A small labeled scan with its toy model, shared by the pipeline cases.
struct Fixture {
    testsupport::TempDir dir{"cli"};
    std::string scan = dir.file("scan.ply");
    std::string model = dir.file("toy.bin");
    Fixture() {
        SynthConfig s;
        s.length = 2.0;
        s.bolt_count = 3;
        s.stray_cluster_count = 2;
        s.debris_count = 1;
        save_ply(generate_scan(s).cloud, scan);
        segnet::save_model(segnet::SegModel(toy_arch(), 3), model);
    }
    std::string config(const std::string& workdir, const std::string& extra = "") const {
        return "[run]\ninput = " + scan + "\nworkdir = " + workdir + "\nmode = predict\nmodel = " + model +
               "\n" + extra + "\n[predict]\ntile = 256\n";
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("config parsing: sections, comments, whitespace") {
    const auto c = ConfigFile::parse("top = 1\n# comment\n[filter]\n  eps = 0.2   ; trailing\n\n[train]\nwidths=8,8,8\n");
    CHECK(c.get("", "top") == "1");
    CHECK(c.get("filter", "eps") == "0.2");
    CHECK(c.line_of("filter", "eps") == 4);
    CHECK(c.get("train", "widths") == "8,8,8");
    CHECK(c.keys("filter") == std::vector<std::string>{"eps"});
    CHECK(!c.has("filter", "min_pts"));
    CHECK_THROWS_AS(c.get("filter", "min_pts"), ConfigError);
}

TEST_CASE("config parsing errors carry the line number") {
    CHECK_THROWS_WITH_AS(ConfigFile::parse("[a]\nx = 1\nx = 2\n", "f.cfg"), doctest::Contains("f.cfg:3"), ConfigError);
    CHECK_THROWS_WITH_AS(ConfigFile::parse("[a\n"), doctest::Contains(":1:"), ConfigError);
    CHECK_THROWS_WITH_AS(ConfigFile::parse("[a]\njunk\n"), doctest::Contains(":2:"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("[]\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse("= 3\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::load("/nonexistent/boltpipe.cfg"), IoError);
}

TEST_CASE("stage readers reject unknown keys and bad values") {
    FilterConfig f;
    read_config(ConfigFile::parse("[filter]\npercentile = 85\nmin_pts = 20\n"), f);
    CHECK(f.percentile == 85.0);
    CHECK(f.dbscan_min_pts == 20);
    CHECK(f.dbscan_eps == FilterConfig{}.dbscan_eps);

    CHECK_THROWS_WITH_AS(read_config(ConfigFile::parse("[filter]\n\nepss = 1\n", "x.cfg"), f),
                         doctest::Contains("x.cfg:3"), ConfigError);
    CHECK_THROWS_AS(read_config(ConfigFile::parse("[filter]\neps = abc\n"), f), ConfigError);
    CHECK_THROWS_AS(read_config(ConfigFile::parse("[filter]\nmin_pts = 2.5\n"), f), ConfigError);

    segnet::ArchConfig a;
    segnet::TrainConfig t;
    read_config(ConfigFile::parse("[train]\nwidths = 16, 16,32\nepochs = 3\nverbose = true\n"), a, t);
    CHECK(a.edge_widths == std::vector<std::size_t>{16, 16, 32});
    CHECK(t.max_epochs == 3);
    CHECK(t.verbose);
    CHECK_THROWS_AS(read_config(ConfigFile::parse("[train]\nverbose = maybe\n"), a, t), ConfigError);
    CHECK_THROWS_AS(read_config(ConfigFile::parse("[train]\nwidths = 8,x\n"), a, t), ConfigError);

    // Values set programmatically (the CLI flag path) win over the file.
    auto c = ConfigFile::parse("[filter]\neps = 0.3\n");
    c.set("filter", "eps", "0.05");
    read_config(c, f);
    CHECK(f.dbscan_eps == 0.05);
}

TEST_CASE("report write and read") {
    testsupport::TempDir dir("report");
    Report r;
    r.add("points", std::size_t{12});
    r.add("f1", 0.95670103092783505);
    r.add("name", "scan a");
    r.add("ok", true);
    r.add("delta", -3);
    const std::string out = dir.file("x.ply");
    CHECK(report_path(out) == out + ".report");
    r.write(report_path(out));
    const Report back = Report::read(report_path(out));
    REQUIRE(back.entries().size() == 5);
    CHECK(*back.find("points") == "12");
    CHECK(std::stod(*back.find("f1")) == 0.95670103092783505);
    CHECK(*back.find("name") == "scan a");
    CHECK(*back.find("ok") == "true");
    CHECK(*back.find("delta") == "-3");
    CHECK(back.find("missing") == nullptr);
    CHECK(slurp(report_path(out)).find("points=12\n") == 0);

    Report m;
    m.merge(r, "stage.");
    CHECK(m.find("stage.points") != nullptr);
    CHECK_THROWS_AS(r.add("a=b", 1), ContractError);
    CHECK_THROWS_AS(r.add("k", "two\nlines"), ContractError);
}

TEST_CASE("timing table layout") {
    const Timings t{{"k-NN filtering", 1.5}, {"DBSCAN", 0.25}};
    const std::string s = timing_table(t);
    CHECK(s.find("Process") != std::string::npos);
    CHECK(s.find("k-NN filtering") != std::string::npos);
    CHECK(s.find("Total") != std::string::npos);
    CHECK(s.find("1.75") != std::string::npos);
    Report r;
    add_timings(r, t);
    REQUIRE(r.find("time.total") != nullptr);
    CHECK(std::stod(*r.find("time.total")) == doctest::Approx(1.75));
}

TEST_CASE("pipeline validation happens before any work") {
    testsupport::TempDir dir("val");
    const std::string work = dir.file("work");
    auto cfg = pipeline_config(ConfigFile::parse("[run]\ninput = " + dir.file("nope.ply") + "\nworkdir = " + work +
                                                 "\nmode = train\n"));
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("nope.ply"), ConfigError);
    CHECK(!fs::exists(work));

    write_text(dir.file("in.ply"), "");
    CHECK_THROWS_AS(pipeline_config(ConfigFile::parse("[run]\ninput = " + dir.file("in.ply") + "\nmode = guess\n"))
                        .validate(),
                    ConfigError);
    // predict mode needs an existing model.
    CHECK_THROWS_AS(pipeline_config(ConfigFile::parse("[run]\ninput = " + dir.file("in.ply") + "\n")).validate(),
                    ConfigError);
    CHECK_THROWS_WITH_AS(pipeline_config(ConfigFile::parse("[run]\ninput = a\n\nfoo = 1\n", "r.cfg")),
                         doctest::Contains("r.cfg:4"), ConfigError);
    CHECK_THROWS_AS(pipeline_config(ConfigFile::parse("[run]\ninput = a\n[filter]\npercentile = 120\n")).validate(),
                    ConfigError);
}

TEST_CASE("end-to-end predict run, resume and failure") {
    auto& fx = fixture();
    const std::string work = fx.dir.file("work");
    const auto cfg = pipeline_config(ConfigFile::parse(fx.config(work)));
    const PipelineResult first = run_pipeline(cfg);
    CHECK(first.skipped.empty());
    for (const char* f : {"preprocessed.ply", "filtered.ply", "pred.ply", "eval.report", "maps.ply", "run.report",
                          "pred.ply.report", "filtered.ply.report"}) {
        CHECK_MESSAGE(fs::exists(fs::path(work) / f), f);
    }
    const PointCloud pred = load_ply((fs::path(work) / "pred.ply").string());
    CHECK(pred.has_labels());
    CHECK(pred.has_channel("probability"));
    CHECK(pred.size() == load_ply((fs::path(work) / "filtered.ply").string()).size());
    const Report ev = Report::read((fs::path(work) / "eval.report").string());
    for (const char* k : {"iou_bolt", "iou_background", "precision", "recall", "f1", "tp", "fp", "fn"}) {
        CHECK_MESSAGE(ev.find(k) != nullptr, k);
    }
    CHECK(*ev.find("ground_truth") == "3");
    const PointCloud maps = load_ply((fs::path(work) / "maps.ply").string());
    CHECK(maps.has_channel("bolt_count"));

    // One timing line per executed process, in pipeline order.
    std::set<std::string> rows;
    for (const auto& t : first.timings) rows.insert(t.row);
    for (const char* row : {"k-NN filtering", "cloth simulation", "connected component filtering",
                            "eigenvalue calculations", "DBSCAN", "ROI cropping", "semantic segmentation"}) {
        CHECK_MESSAGE(rows.count(row) == 1, row);
    }
    const Report run = Report::read((fs::path(work) / "run.report").string());
    CHECK(run.find("time.k_nn_filtering") != nullptr);
    CHECK(run.find("time.total") != nullptr);
    CHECK(run.find("eval.f1") != nullptr);

    const PipelineResult second = run_pipeline(cfg);
    for (const char* s : {"preprocess", "filter", "predict", "maps"}) {
        CHECK_MESSAGE(std::count(second.skipped.begin(), second.skipped.end(), s) == 1, s);
    }
    for (const auto& t : second.timings) {
        CHECK(t.row != "k-NN filtering");
        CHECK(t.row != "DBSCAN");
    }

    // A newer model invalidates only the prediction and what depends on it.
    const auto model_copy = fx.dir.file("toy2.bin");
    fs::copy_file(fx.model, model_copy);
    auto cfg2 = cfg;
    cfg2.model = model_copy;
    const PipelineResult third = run_pipeline(cfg2);
    CHECK(std::count(third.skipped.begin(), third.skipped.end(), "filter") == 1);
    CHECK(std::count(third.skipped.begin(), third.skipped.end(), "predict") == 0);

    // Corrupt model: the predict stage fails by name, earlier artifacts stay.
    write_text(model_copy, "not a model");
    fs::last_write_time(model_copy, fs::file_time_type::clock::now() + std::chrono::seconds(5));
    try {
        run_pipeline(cfg2);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "predict");
        CHECK(std::string(e.what()).find("predict") != std::string::npos);
    }
    CHECK(fs::exists(fs::path(work) / "filtered.ply"));
    CHECK(fs::exists(fs::path(work) / "preprocessed.ply"));
}

TEST_CASE("command line: exit codes and flag precedence") {
    auto& fx = fixture();
    const std::string log = fx.dir.file("cli.log");

    CHECK(run_cli("", log) != 0);
    CHECK(run_cli("frobnicate", log) != 0);

    // Flags win over the config file.
    const std::string cfg = fx.dir.file("synth.cfg");
    write_text(cfg, "[synth]\nlength = 1.5\nbolts = 3\nclutter = 0\ndebris = 0\nseed = 4\n");
    const auto out = fx.dir.file("s.ply");
    REQUIRE(run_cli("synth --config " + cfg + " --out " + out + " --bolts 1", log) == 0);
    const Report r = Report::read(report_path(out));
    CHECK(*r.find("planted_bolts") == "1");
    CHECK(*r.find("seed") == "4");
    CHECK(r.find("time.synthesis") != nullptr);

    write_text(cfg, "[synth]\nlenght = 1.5\n");
    CHECK(run_cli("synth --config " + cfg + " --out " + out, log) == 1);
    CHECK(slurp(log).find("lenght") != std::string::npos);

    // run: success, bad input (before any stage), and a failing stage.
    const std::string work = fx.dir.file("cliwork");
    const std::string rc = fx.dir.file("run.cfg");
    write_text(rc, fx.config(work, "maps = false"));
    CHECK(run_cli("--threads 1 run --config " + rc, log) == 0);
    CHECK(slurp(log).find("Total") != std::string::npos);
    CHECK(!fs::exists(fs::path(work) / "maps.ply"));
    CHECK(run_cli("run --config " + rc + " --in " + fx.dir.file("missing.ply"), log) == 1);
    CHECK(slurp(log).find("missing.ply") != std::string::npos);

    const std::string bad_model = fx.dir.file("bad.bin");
    write_text(bad_model, "BPSEG1 garbage");
    CHECK(run_cli("run --config " + rc + " --model " + bad_model + " --force", log) == 2);
    CHECK(slurp(log).find("stage predict failed") != std::string::npos);
}
