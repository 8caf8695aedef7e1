// End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
// exits 0 only when every criterion holds.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "opvlm/benchmarks.hpp"
#include "opvlm/eval.hpp"
#include "opvlm/io.hpp"
#include "opvlm/memory_bank.hpp"
#include "opvlm/trainer.hpp"

using namespace opvlm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Vec random_ball_vec(std::size_t dim, double max_norm, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, max_norm);
    Vec v(dim);
    for (double& x : v) x = g(rng);
    const double r = u(rng) / norm(v);
    for (double& x : v) x *= r;
    return v;
}

struct Criterion {
    int id;
    std::string label;
    bool ok;
    std::string detail;
};

std::vector<Criterion> results;

void record(int id, const std::string& label, bool ok, const std::string& detail) {
    results.push_back({id, label, ok, detail});
    std::cout << "criterion " << id << " (" << label << "): " << (ok ? "PASS" : "FAIL") << " — "
              << detail << std::endl;
}

// --- 1: closed-form geometry is exact -------------------------------------

bool geometry_exactness(std::string& detail) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    const Curvature c1(1.0);

    double max_formula_err = 0.0;
    for (int i = 0; i < 500; ++i) {
        const Vec u = random_ball_vec(4, 0.95, rng);
        const Vec v = random_ball_vec(4, 0.95, rng);
        const double reference = std::acosh(
            1.0 + 2.0 * norm2(sub(u, v)) / ((1.0 - norm2(u)) * (1.0 - norm2(v))));
        const double got = poincare_distance(BallPoint{u, c1}, BallPoint{v, c1});
        max_formula_err = std::max(max_formula_err,
                                   std::abs(got - reference) / std::max(1.0, reference));
    }

    double max_radial_err = 0.0;
    for (double c : {0.25, 1.0, 4.0}) {
        const Curvature curv(c);
        for (int i = 0; i < 200; ++i) {
            const Vec u = random_ball_vec(3, 0.9 / std::sqrt(c), rng);
            const double want = 2.0 / std::sqrt(c) * std::atanh(std::sqrt(c) * norm(u));
            const double got =
                poincare_distance(BallPoint{u, curv}, BallPoint{Vec(3, 0.0), curv});
            max_radial_err =
                std::max(max_radial_err, std::abs(got - want) / std::max(1.0, want));
        }
    }

    bool axioms = true;
    for (int i = 0; i < 1000 && axioms; ++i) {
        const Vec a = random_ball_vec(3, 0.9, rng);
        const Vec b = random_ball_vec(3, 0.9, rng);
        const Vec c = random_ball_vec(3, 0.9, rng);
        const double dab = poincare_distance(BallPoint{a, c1}, BallPoint{b, c1});
        const double dba = poincare_distance(BallPoint{b, c1}, BallPoint{a, c1});
        const double dac = poincare_distance(BallPoint{a, c1}, BallPoint{c, c1});
        const double dbc = poincare_distance(BallPoint{b, c1}, BallPoint{c, c1});
        axioms = dab >= 0.0 && std::abs(dab - dba) <= 1e-12 * std::max(1.0, dab) &&
                 dab <= dac + dbc + 1e-9;
    }

    const double elapsed = seconds_since(t0);
    std::ostringstream out;
    out << "formula err " << max_formula_err << ", radial err " << max_radial_err
        << ", axioms " << (axioms ? "ok" : "violated") << ", " << elapsed << "s";
    detail = out.str();
    return max_formula_err <= 1e-12 && max_radial_err <= 1e-9 && axioms && elapsed < 5.0;
}

// --- 2: analytic gradients match finite differences -----------------------

bool gradients(std::string& detail) {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.d_feat = 12;
    cfg.d_model = 6;
    cfg.d_ball = 4;
    cfg.k = 3;
    cfg.hidden_mult = 2;
    const GradcheckReport report = gradcheck_all(cfg, 1e-6, 1e-4);
    double worst = 0.0;
    for (const auto& c : report.components)
        if (!c.skipped) worst = std::max(worst, c.max_rel_err);
    const double elapsed = seconds_since(t0);
    std::ostringstream out;
    out << report.components.size() << " components, worst rel err " << worst << ", " << elapsed
        << "s";
    detail = out.str();
    return report.passed() && elapsed < 30.0;
}

// --- 3: Euclidean limit ----------------------------------------------------

bool euclidean_limit(std::string& detail) {
    std::mt19937_64 rng(103);
    const Curvature tiny(1e-6);
    double max_err = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec u = random_ball_vec(3, 0.5, rng);
        const Vec v = random_ball_vec(3, 0.5, rng);
        const double dc = poincare_distance(BallPoint{u, tiny}, BallPoint{v, tiny});
        max_err = std::max(max_err, std::abs(dc - euclidean_limit_distance(u, v)));
    }
    std::ostringstream out;
    out << "max |d_c - d_0| = " << max_err << " over 1000 pairs";
    detail = out.str();
    return max_err <= 1e-3;
}

// --- 4: shipped 64-concept benchmark --------------------------------------

bool benchmark64(std::string& detail) {
    const auto t0 = Clock::now();
    const TrainConfig cfg = benchmark64_config();
    const SyntheticSpec spec = benchmark64_spec();
    const EvalReport a = run_cached_benchmark(cfg, spec);
    const double elapsed = seconds_since(t0);
    const EvalReport b = run_cached_benchmark(cfg, spec);
    std::ostringstream out;
    out << "accuracy " << a.accuracy << " in " << cfg.epochs << " epochs, " << elapsed
        << "s, rerun " << (a.accuracy == b.accuracy ? "identical" : "diverged");
    detail = out.str();
    return cfg.epochs <= 5 && a.accuracy >= 0.95 && a.accuracy == b.accuracy &&
           elapsed < 120.0;
}

// --- 5: train-free parse / retrieve ---------------------------------------

bool train_free(std::string& detail) {
    ModelConfig cfg;
    cfg.d_feat = 16;
    cfg.d_model = 8;
    cfg.d_ball = 4;
    cfg.k = 2;
    cfg.hidden_mult = 2;
    const ModelParams params = init_model(cfg, 77);
    const std::uint64_t fp_before = embedder_fingerprint(params.embedder);

    std::mt19937_64 rng(105);
    std::normal_distribution<double> g(0.0, 1.0);
    auto make_refs = [&](std::size_t n) {
        std::vector<Matrix> refs;
        for (std::size_t i = 0; i < n; ++i) {
            Matrix m(4, cfg.d_feat);
            for (double& x : m.data) x = g(rng);
            refs.push_back(std::move(m));
        }
        return refs;
    };

    ConceptBank bank(fp_before);
    bool parse_bitwise = true;
    std::vector<std::vector<Matrix>> all_refs;
    for (int i = 0; i < 12; ++i) {
        all_refs.push_back(make_refs(3));
        const std::string id = "<sks_" + std::to_string(i) + ">";
        const ConceptEmbedding& stored = bank.parse(id, all_refs.back(), params.embedder, cfg);
        const ConceptEmbedding direct = embed_concept(all_refs.back(), params.embedder, cfg, id);
        parse_bitwise = parse_bitwise && stored.tokens.data == direct.tokens.data;
        const ConceptEmbedding* got = bank.retrieve(id);
        parse_bitwise = parse_bitwise && got && got->tokens.data == direct.tokens.data;
    }
    const bool frozen = embedder_fingerprint(params.embedder) == fp_before;

    const fs::path dir =
        fs::temp_directory_path() / ("opvlm_acc5_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    const fs::path path = dir / "bank.opmb";
    bank.save(path);
    const ConceptBank loaded = ConceptBank::load(path, fp_before);
    bool load_bitwise = loaded.size() == bank.size();
    for (const std::string& id : bank.list()) {
        const BankEntry* a = bank.entry(id);
        const BankEntry* b = loaded.entry(id);
        load_bitwise = load_bitwise && b && a->embedding.tokens.data == b->embedding.tokens.data;
    }
    const fs::path again = dir / "bank2.opmb";
    loaded.save(again);
    load_bitwise = load_bitwise && read_file(path) == read_file(again);

    bool crc_rejected = false;
    auto bytes = read_file(path);
    bytes[bytes.size() / 2] ^= 0x01;
    write_file(dir / "corrupt.opmb", bytes);
    try {
        ConceptBank::load(dir / "corrupt.opmb");
    } catch (const format_error&) {
        crc_rejected = true;
    }
    fs::remove_all(dir);

    std::ostringstream out;
    out << "parse" << (parse_bitwise ? "=embed" : " drift") << ", embedder "
        << (frozen ? "frozen" : "mutated") << ", round trip "
        << (load_bitwise ? "bitwise" : "lossy") << ", corruption "
        << (crc_rejected ? "rejected" : "accepted");
    detail = out.str();
    return parse_bitwise && frozen && load_bitwise && crc_rejected;
}

// --- 6: retrieval latency scaling -----------------------------------------

bool lookup_latency(std::string& detail) {
    auto make_bank = [](std::size_t n) {
        ConceptBank bank(42);
        for (std::size_t i = 0; i < n; ++i) {
            BankEntry e;
            e.identifier = "<sks_" + std::to_string(i) + ">";
            e.embedding.concept_id = e.identifier;
            e.embedding.tokens = Matrix(2, 8, 0.25);
            bank.insert(std::move(e));
        }
        return bank;
    };

    // a hot working set keeps DRAM latency out of what is a lookup-cost check
    auto median_latency = [](const ConceptBank& bank, std::size_t n) {
        std::mt19937_64 rng(107);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        std::vector<std::string> ids;
        for (int i = 0; i < 256; ++i) ids.push_back("<sks_" + std::to_string(pick(rng)) + ">");
        std::size_t sink = 0;
        std::vector<double> trials;
        for (int t = 0; t < 31; ++t) {
            const auto t0 = Clock::now();
            for (int rep = 0; rep < 4; ++rep)
                for (const std::string& id : ids) {
                    const ConceptEmbedding* z = bank.retrieve(id);
                    if (z) sink += z->tokens.rows;
                }
            trials.push_back(seconds_since(t0));
        }
        std::sort(trials.begin(), trials.end());
        if (sink == 0) std::cerr << "lookup_latency: empty bank\n";
        return trials[trials.size() / 2] / double(4 * 256);
    };

    const ConceptBank small = make_bank(100);
    const ConceptBank large = make_bank(100000);
    const double lat_small = median_latency(small, 100);
    const double lat_large = median_latency(large, 100000);
    const double ratio = lat_large / lat_small;

    std::ostringstream out;
    out << "median " << lat_small * 1e9 << "ns at 1e2 vs " << lat_large * 1e9
        << "ns at 1e5 entries (x" << ratio << ")";
    detail = out.str();
    return ratio < 3.0;
}

// --- 7: curvature helps on the hierarchical world -------------------------

bool curvature_trend(const fs::path& artifacts, std::string& detail) {
    const auto t0 = Clock::now();
    const SweepReport rep = sweep(SweepParam::curvature, {0.0, 0.25, 0.5, 1.0, 2.0, 4.0},
                                  benchmark_seeds(), curvature_sweep_config(), sweep_tree_spec());
    const double elapsed = seconds_since(t0);

    std::ofstream(artifacts / "curvature_sweep.csv") << rep.csv();
    std::ofstream(artifacts / "curvature_sweep.json") << rep.json().dump(2) << "\n";

    const double mean_c0 = rep.mean[0];
    const double mean_c1 = rep.mean[3];  // value 1.0
    std::ostringstream out;
    out << "mean acc " << mean_c1 << " at c=1 vs " << mean_c0 << " at c=0 over "
        << rep.seeds.size() << " seeds, " << elapsed << "s";
    detail = out.str();
    return mean_c1 >= mean_c0 && elapsed < 900.0;
}

// --- 8: more concept tokens never hurt on the shipped benchmark -----------

bool k_trend(const fs::path& artifacts, std::string& detail) {
    const SweepReport rep = sweep(SweepParam::k, {1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0},
                                  benchmark_seeds(), sweep_config(), sweep_flat_spec());
    std::ofstream(artifacts / "k_sweep.csv") << rep.csv();
    std::ofstream(artifacts / "k_sweep.json") << rep.json().dump(2) << "\n";

    const double mean_k1 = rep.mean[0];
    const double mean_k16 = rep.mean[4];
    std::ostringstream out;
    out << "mean acc " << mean_k16 << " at k=16 vs " << mean_k1 << " at k=1 over "
        << rep.seeds.size() << " seeds";
    detail = out.str();
    return mean_k16 >= mean_k1;
}

// --- 9: ablation trends ----------------------------------------------------

bool ablation_trends(const fs::path& artifacts, std::string& detail) {
    const AblationReport rep =
        ablation_matrix(sweep_config(), sweep_flat_spec(), benchmark_seeds());
    std::ofstream(artifacts / "ablation.csv") << rep.csv();
    std::ofstream(artifacts / "ablation.json") << rep.json().dump(2) << "\n";

    const double full = rep.row("+hyperbolic").mean;
    const double no_in = rep.row("full_no_instance_norm").mean;
    const double no_disc = rep.row("full_no_discriminative").mean;
    std::ostringstream out;
    out << "full " << full << " vs no-instance-norm " << no_in << " vs no-discriminative "
        << no_disc;
    detail = out.str();
    return full >= no_in && full >= no_disc;
}

// --- 10: CLI determinism ---------------------------------------------------

bool cli_determinism(std::string& detail) {
    const fs::path dir =
        fs::temp_directory_path() / ("opvlm_acc10_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);

    const fs::path config_path = dir / "config.json";
    std::ofstream(config_path) << R"({
  "d_feat": 16, "d_model": 8, "d_ball": 4, "k": 2, "hidden_mult": 2,
  "lr": 0.001, "epochs": 2, "batch_size": 16, "seed": 9,
  "num_concepts": 8, "images_per_concept": 3, "queries_per_concept": 8,
  "tokens": 6, "intra_noise": 0.3
})";

    auto run_train = [&](const fs::path& out) {
        std::ostringstream cmd;
        cmd << '"' << OPVLM_CLI_PATH << '"' << " train --config " << config_path << " --out "
            << out << " > /dev/null 2>&1";
        return std::system(cmd.str().c_str());
    };
    const int rc1 = run_train(dir / "a");
    const int rc2 = run_train(dir / "b");

    bool ok = rc1 == 0 && rc2 == 0;
    bool ckpt_equal = false, report_equal = false;
    if (ok) {
        ckpt_equal = read_file(dir / "a" / "checkpoint.opck") ==
                     read_file(dir / "b" / "checkpoint.opck");
        report_equal =
            read_file(dir / "a" / "metrics.json") == read_file(dir / "b" / "metrics.json");
    }
    fs::remove_all(dir);

    std::ostringstream out;
    out << "exit codes " << rc1 << "/" << rc2 << ", checkpoint "
        << (ckpt_equal ? "byte-identical" : "differs") << ", report "
        << (report_equal ? "byte-identical" : "differs");
    detail = out.str();
    return ok && ckpt_equal && report_equal;
}

}  // namespace

int main() {
    const fs::path artifacts = fs::current_path() / "acceptance_artifacts";
    fs::create_directories(artifacts);

    struct Entry {
        int id;
        std::string label;
        bool (*fn)(std::string&);
    };

    std::string detail;
    bool all_ok = true;
    auto run = [&](int id, const std::string& label, auto&& fn) {
        detail.clear();
        bool ok = false;
        try {
            ok = fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        record(id, label, ok, detail);
        all_ok = all_ok && ok;
    };

    run(1, "geometry exactness", geometry_exactness);
    run(2, "analytic gradients", gradients);
    run(3, "euclidean limit", euclidean_limit);
    run(4, "64-concept benchmark", benchmark64);
    run(5, "train-free parse/retrieve", train_free);
    run(6, "lookup latency", lookup_latency);
    run(7, "curvature trend",
        [&](std::string& d) { return curvature_trend(artifacts, d); });
    run(8, "concept-token trend", [&](std::string& d) { return k_trend(artifacts, d); });
    run(9, "ablation trends", [&](std::string& d) { return ablation_trends(artifacts, d); });
    run(10, "cli determinism", cli_determinism);

    std::cout << (all_ok ? "all criteria passed" : "one or more criteria failed") << std::endl;
    return all_ok ? 0 : 3;
}
