#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SIMGEN_CLI_PATH;

// micro-scale settings shared by every invocation in this suite
const std::string kMicro =
    " --set res.h=16 --set res.w=28 --set unet.base=8 --set unet.cond_dim=32"
    " --set unet.time_dim=16 --set unet.text_dim=8 --set adapter.ctrl=16"
    " --set adapter.branch=4 --set extractor.feat_dim=4 --set extractor.steps=30"
    " --set perception.steps=30 --set eval.scenes=4 --set sample.steps=6";

int run(const std::string& args) {
    std::string cmd = kCli + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / "simgen_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    std::string p(const std::string& rel) const { return (dir / rel).string(); }
};

}  // namespace

TEST_CASE("--help exists for every subcommand and exits 0") {
    CHECK(run(" --help") == 0);
    for (const char* sub :
         {"gen-data", "train-cond", "train-img", "sim2real", "sample", "scenario", "eval"})
        CHECK(run(std::string(" ") + sub + " --help") == 0);
    for (const char* sub : {"replay", "adversarial"})
        CHECK(run(std::string(" scenario ") + sub + " --help") == 0);
    for (const char* sub : {"fid", "dpix", "control", "augment", "ablate"})
        CHECK(run(std::string(" eval ") + sub + " --help") == 0);
}

TEST_CASE("usage errors exit 1, runtime failures exit 2") {
    CHECK(run(" no-such-command") == 1);
    CHECK(run(" gen-data") == 1);  // missing --out
    CHECK(run(" gen-data --out /tmp/x --bogus-flag") == 1);
    Workspace ws;
    // unknown configuration key is caught at runtime
    CHECK(run(" gen-data --out " + ws.p("d") + " --set nonsense.key=1") == 2);
    // missing dataset directory
    CHECK(run(" train-cond --data " + ws.p("missing") + " --out " + ws.p("o") + kMicro) == 2);
}

TEST_CASE("gen-data is deterministic: identical manifests for identical seeds") {
    Workspace ws;
    std::string sizes = " gen-data --sizes 8 6 --seed 4" + kMicro;
    REQUIRE(run(sizes + " --out " + ws.p("a")) == 0);
    REQUIRE(run(sizes + " --out " + ws.p("b")) == 0);
    CHECK(slurp(ws.dir / "a" / "manifest.json") == slurp(ws.dir / "b" / "manifest.json"));
    CHECK(slurp(ws.dir / "a" / "run_manifest.json") == slurp(ws.dir / "b" / "run_manifest.json"));
    REQUIRE(run(" gen-data --sizes 8 6 --seed 5" + kMicro + " --out " + ws.p("c")) == 0);
    CHECK(slurp(ws.dir / "a" / "manifest.json") != slurp(ws.dir / "c" / "manifest.json"));
}

TEST_CASE("config file values apply and flags take precedence") {
    Workspace ws;
    {
        std::ofstream f(ws.p("cfg.txt"));
        f << "# comment line\n";
        f << "data.real = 8\n";
        f << "data.sim = 6\n";
        f << "seed = 9\n";
    }
    REQUIRE(run(" --config " + ws.p("cfg.txt") + kMicro + " gen-data --out " + ws.p("a")) == 0);
    // flag overrides the file seed; results must differ
    REQUIRE(run(" --config " + ws.p("cfg.txt") + kMicro + " --seed 10 gen-data --out " +
                ws.p("b")) == 0);
    CHECK(slurp(ws.dir / "a" / "manifest.json") != slurp(ws.dir / "b" / "manifest.json"));
}

TEST_CASE("training and sampling pipeline is rerun-deterministic") {
    Workspace ws;
    REQUIRE(run(" gen-data --sizes 12 10 --seed 2" + kMicro + " --out " + ws.p("ds")) == 0);
    std::string train = " train-cond --data " + ws.p("ds") + " --steps 8 --seed 2" + kMicro;
    REQUIRE(run(train + " --out " + ws.p("c1")) == 0);
    REQUIRE(run(train + " --out " + ws.p("c2")) == 0);
    CHECK(slurp(ws.dir / "c1" / "run_manifest.json") == slurp(ws.dir / "c2" / "run_manifest.json"));

    std::string timg =
        " train-img --data " + ws.p("ds") + " --trunk-steps 8 --steps 6 --seed 2" + kMicro;
    REQUIRE(run(timg + " --out " + ws.p("i1")) == 0);
    REQUIRE(run(timg + " --out " + ws.p("i2")) == 0);
    CHECK(slurp(ws.dir / "i1" / "run_manifest.json") == slurp(ws.dir / "i2" / "run_manifest.json"));

    std::string sample = " sample --img " + ws.p("i1/imgdiff.ckpt") + " --cond " +
                         ws.p("c1/condiff.ckpt") + " --data " + ws.p("ds") +
                         " --count 2 --seed 3" + kMicro;
    REQUIRE(run(sample + " --out " + ws.p("g1")) == 0);
    REQUIRE(run(sample + " --out " + ws.p("g2")) == 0);
    CHECK(slurp(ws.dir / "g1" / "run_manifest.json") == slurp(ws.dir / "g2" / "run_manifest.json"));
    // bit-identical images
    for (auto& e : fs::directory_iterator(ws.dir / "g1"))
        if (e.path().extension() == ".ppm")
            CHECK(slurp(e.path()) == slurp(ws.dir / "g2" / e.path().filename()));
    // different seed, different images
    REQUIRE(run(" sample --img " + ws.p("i1/imgdiff.ckpt") + " --cond " + ws.p("c1/condiff.ckpt") +
                " --data " + ws.p("ds") + " --count 2 --seed 4" + kMicro + " --out " +
                ws.p("g3")) == 0);
    CHECK(slurp(ws.dir / "g1" / "run_manifest.json") != slurp(ws.dir / "g3" / "run_manifest.json"));
}

TEST_CASE("scenario subcommands emit rasters and records") {
    Workspace ws;
    REQUIRE(run(" scenario replay --gen 7 --t 1.0" + kMicro + " --out " + ws.p("rep")) == 0);
    for (const char* f : {"scene.json", "simcond_depth.pgm", "simcond_seg.ppm", "sim_rgb.ppm",
                          "instance.pgm", "topdown.ppm", "run_manifest.json"})
        CHECK(fs::exists(ws.dir / "rep" / f));

    REQUIRE(run(" scenario adversarial --gen 7 --t 1.0 --horizon 4 --modes 6" + kMicro +
                " --out " + ws.p("adv")) == 0);
    CHECK(fs::exists(ws.dir / "adv" / "scene.json"));
    REQUIRE(run(" scenario adversarial --gen 7 --t 1.0 --horizon 4 --modes 6" + kMicro +
                " --out " + ws.p("adv2")) == 0);
    CHECK(slurp(ws.dir / "adv" / "run_manifest.json") ==
          slurp(ws.dir / "adv2" / "run_manifest.json"));
}
