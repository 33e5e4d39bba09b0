#include "gsnn/dataset.hpp"
#include "gsnn/photonic.hpp"
#include "gsnn/serialize.hpp"
#include "gsnn/symplectic.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace gsnn;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "gsnn_cli_out.txt";
    const std::string cmd =
        std::string(GSNN_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return {WEXITSTATUS(status), text};
}

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "gsnn_cli_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("compile-linear then verify-program round trip") {
    const auto dir = work_dir();
    const fs::path matrix_path = dir / "s.json";
    const fs::path bias_path = dir / "xi.json";
    const fs::path program_path = dir / "prog.txt";

    BlockGenerator gen{MatrixXd(2, 2), MatrixXd(2, 2), MatrixXd(2, 2)};
    gen.a << 0.2, -0.1, 0.05, 0.3;
    gen.b << 0.1, 0.0, 0.0, -0.2;
    gen.c << -0.15, 0.1, 0.1, 0.25;
    const MatrixXd s = symplectic_from_generator(gen);
    write_file(matrix_path.string(), matrix_to_json(s));
    write_file(bias_path.string(), "[0.1, -0.2, 0.3, 0.05]");

    const auto compile = run_cli("compile-linear --matrix " + matrix_path.string() +
                                 " --bias " + bias_path.string() + " --out " +
                                 program_path.string());
    CHECK(compile.exit_code == 0);

    const auto verify = run_cli("verify-program --program " + program_path.string() +
                                " --matrix " + matrix_path.string() + " --bias " +
                                bias_path.string());
    CHECK(verify.exit_code == 0);
    CHECK(verify.output.find("residual") != std::string::npos);
}

TEST_CASE("verify-program rejects nonlinear programs with a distinct exit code") {
    const auto dir = work_dir();
    const fs::path program_path = dir / "nl.txt";

    const auto compile = run_cli("compile-nonlinearity --k 1 --eps 0.5 --m 2 --out " +
                                 program_path.string());
    CHECK(compile.exit_code == 0);

    const auto verify = run_cli("verify-program --program " + program_path.string());
    CHECK(verify.exit_code == 3);
    CHECK(verify.output.find("unsupported") != std::string::npos);

    // The printed gate count matches the counting law before simulation fails.
    const std::string expected = "gate count " + std::to_string(gate_count(1, 2));
    CHECK(verify.output.find("expected " + std::to_string(gate_count(1, 2))) !=
          std::string::npos);
}

TEST_CASE("validation failures exit with code 2") {
    const auto missing = run_cli("compile-linear --matrix /nonexistent.json");
    CHECK(missing.exit_code != 0);

    const auto dir = work_dir();
    const fs::path bad = dir / "bad.json";
    write_file(bad.string(), "[[1.0, 0.0], [0.0, 2.0]]");  // not symplectic
    const auto invalid = run_cli("compile-linear --matrix " + bad.string());
    CHECK(invalid.exit_code == 2);
}

TEST_CASE("gen-data and sigma curve emission") {
    const auto dir = work_dir();
    const auto gen = run_cli("gen-data --out-dir " + dir.string() +
                             " --n-per-class 2 --length 16 --seed-train 5 --seed-test 6");
    CHECK(gen.exit_code == 0);
    CHECK(fs::exists(dir / "train.csv"));
    const auto series = read_series_csv((dir / "train.csv").string());
    CHECK(series.size() == 12);
    CHECK(series.front().locations.size() == 16);

    const fs::path sigma = dir / "sigma.csv";
    const auto emit = run_cli("emit-sigma-curve --k 3 --m-list 1,2 --x-min -1 --x-max 3 "
                              "--points 9 --out " + sigma.string());
    CHECK(emit.exit_code == 0);
    CHECK(fs::exists(sigma));
}
