// sfm: distinct-count sketching CLI: build PCSA sketches, privatize them
// with randomized response, merge noisy sketches, estimate cardinalities,
// and run error-curve simulations.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sfm/sfm.hpp"

namespace {

using nlohmann::json;

sfm::LoadedSketch load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw sfm::IoError("cannot open " + path);
    return sfm::read_sketch(in);
}

void store(const std::string& path, const auto& sketch) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw sfm::IoError("cannot open " + path + " for writing");
    sfm::write_sketch(sketch, out);
    out.flush();
    if (!out) throw sfm::IoError("write failed for " + path);
}

sfm::RandomSource make_rng(const std::optional<uint64_t>& seed) {
    return seed ? sfm::RandomSource::seeded(*seed) : sfm::RandomSource::secure();
}

int cmd_sketch(const std::string& input, uint32_t bits, uint32_t levels, uint64_t seed,
               const std::string& out_path, bool keep_empty) {
    sfm::PcsaSketch sketch(sfm::SketchParams{bits, levels, seed});
    sfm::IngestStats stats;
    if (input == "-") {
        stats = sfm::ingest_items(std::cin, sketch, keep_empty);
    } else {
        std::ifstream in(input, std::ios::binary);
        if (!in) throw sfm::IoError("cannot open " + input);
        stats = sfm::ingest_items(in, sketch, keep_empty);
    }
    store(out_path, sketch);
    std::cout << "items " << stats.items << "\npopcount " << sketch.popcount() << "\n";
    return 0;
}

int cmd_privatize(const std::string& in_path, double eps, const std::string& mech_name,
                  const std::optional<uint64_t>& rng_seed, const std::string& out_path) {
    const sfm::LoadedSketch loaded = load(in_path);
    if (!std::holds_alternative<sfm::PcsaSketch>(loaded)) {
        throw sfm::MechanismError("input sketch is already private; privatize raw sketches only");
    }
    const auto mech = mech_name == "sym" ? sfm::mechanism_sym(eps) : sfm::mechanism_xor(eps);
    sfm::RandomSource rng = make_rng(rng_seed);
    const sfm::PrivateSketch noisy = sfm::privatize(std::get<sfm::PcsaSketch>(loaded), mech, rng);
    store(out_path, noisy);
    std::cout << "mechanism " << sfm::to_string(mech.kind) << "\neps " << mech.epsilon
              << "\np " << mech.p << "\nq " << mech.q << "\n";
    return 0;
}

int cmd_merge(const std::vector<std::string>& in_paths, const std::string& op_name,
              const std::optional<uint64_t>& rng_seed, const std::string& out_path) {
    if (in_paths.size() < 2) throw sfm::IoError("merge needs at least two inputs");
    const sfm::BoolOp op = op_name == "or"    ? sfm::BoolOp::Or
                           : op_name == "and" ? sfm::BoolOp::And
                                              : sfm::BoolOp::Xor;

    std::vector<sfm::LoadedSketch> loaded;
    loaded.reserve(in_paths.size());
    for (const auto& path : in_paths) loaded.push_back(load(path));

    const bool all_raw = std::all_of(loaded.begin(), loaded.end(), [](const auto& s) {
        return std::holds_alternative<sfm::PcsaSketch>(s);
    });
    const bool all_private = std::all_of(loaded.begin(), loaded.end(), [](const auto& s) {
        return std::holds_alternative<sfm::PrivateSketch>(s);
    });

    if (all_raw) {
        if (op != sfm::BoolOp::Or) {
            throw sfm::UnsupportedOperationError("raw sketches merge with --op or only");
        }
        sfm::PcsaSketch merged = std::get<sfm::PcsaSketch>(loaded[0]);
        for (size_t i = 1; i < loaded.size(); ++i) {
            merged = sfm::merge_exact(merged, std::get<sfm::PcsaSketch>(loaded[i]));
        }
        store(out_path, merged);
        std::cout << "merged " << loaded.size() << " raw sketches (exact)\n";
        return 0;
    }
    if (!all_private) {
        throw sfm::IncompatibleSketchError("cannot merge raw and private sketches together");
    }

    std::vector<sfm::PrivateSketch> sketches;
    sketches.reserve(loaded.size());
    for (auto& s : loaded) sketches.push_back(std::get<sfm::PrivateSketch>(std::move(s)));
    const sfm::MechanismKind kind = sketches[0].mechanism().kind;

    sfm::PrivateSketch merged = [&]() {
        if (kind == sfm::MechanismKind::Xor) {
            if (op != sfm::BoolOp::Or) {
                throw sfm::UnsupportedOperationError(
                    "xor-mechanism sketches support --op or only");
            }
            sfm::PrivateSketch acc = sfm::merge_xor_deterministic(sketches[0], sketches[1]);
            for (size_t i = 2; i < sketches.size(); ++i) {
                acc = sfm::merge_xor_deterministic(acc, sketches[i]);
            }
            return acc;
        }
        if (kind != sfm::MechanismKind::Sym) {
            throw sfm::UnsupportedOperationError(
                "only sym- and xor-mechanism sketches can be merged");
        }
        if (op == sfm::BoolOp::Xor) {
            sfm::PrivateSketch acc = sfm::xor_sym(sketches[0], sketches[1]);
            for (size_t i = 2; i < sketches.size(); ++i) acc = sfm::xor_sym(acc, sketches[i]);
            return acc;
        }
        sfm::RandomSource rng = make_rng(rng_seed);
        return sfm::merge_sym_randomized(sketches, op, rng);
    }();

    if (merged.mechanism().epsilon < 1e-6) {
        std::cerr << "warning: effective budget underflowed to " << merged.mechanism().epsilon
                  << "; estimates from this sketch carry almost no signal\n";
    }
    store(out_path, merged);
    std::cout << "mechanism " << sfm::to_string(merged.mechanism().kind) << "\neps_star "
              << merged.mechanism().epsilon << "\nmerge_count " << merged.merge_count()
              << "\n";
    return 0;
}

int cmd_estimate(const std::string& in_path, bool as_json) {
    const sfm::LoadedSketch loaded = load(in_path);
    const sfm::EstimateResult r = std::visit(
        [](const auto& sketch) { return sfm::estimate_cardinality(sketch); }, loaded);
    const double rel = r.n_hat > 0 ? r.std_err / r.n_hat : 0.0;
    if (as_json) {
        json doc = {
            {"n_hat", r.n_hat},
            {"std_err", r.std_err},
            {"rel_se", rel},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"bracket", {r.bracket_low, r.bracket_high}},
        };
        std::cout << doc.dump() << "\n";
    } else {
        std::cout << "n_hat " << r.n_hat << "\nstd_err " << r.std_err << "\nrel_se " << rel
                  << "\niterations " << r.iterations << "\nconverged "
                  << (r.converged ? "true" : "false") << "\n";
    }
    return 0;
}

int cmd_simulate(const sfm::SimulationSpec& spec, const std::string& out_path) {
    const auto rows = sfm::run_simulation(spec);
    if (out_path == "-") {
        sfm::write_csv(rows, std::cout);
    } else {
        std::ofstream out(out_path, std::ios::trunc);
        if (!out) throw sfm::IoError("cannot open " + out_path + " for writing");
        sfm::write_csv(rows, out);
        out.flush();
        if (!out) throw sfm::IoError("write failed for " + out_path);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mergeable differentially private distinct-count sketches"};
    app.require_subcommand(1);

    // sketch
    auto* sketch = app.add_subcommand("sketch", "build a raw sketch from newline-delimited items");
    std::string input = "-";
    uint32_t bits = 4096, levels = 24;
    uint64_t hash_seed = 0;
    std::string out_path;
    bool keep_empty = false;
    sketch->add_option("input", input, "item file, or - for stdin");
    sketch->add_option("--bits,-b", bits, "bucket count B")->check(CLI::PositiveNumber);
    sketch->add_option("--levels,-l", levels, "level count P")->check(CLI::PositiveNumber);
    sketch->add_option("--seed", hash_seed, "hash seed");
    sketch->add_option("--out,-o", out_path, "output sketch file")->required();
    sketch->add_flag("--keep-empty", keep_empty, "treat empty lines as items");

    // privatize
    auto* privatize = app.add_subcommand("privatize", "apply a randomized-response mechanism");
    std::string priv_in, priv_out, mech_name = "sym";
    double eps = 1.0;
    std::optional<uint64_t> priv_seed;
    privatize->add_option("--in,-i", priv_in, "raw sketch file")->required();
    privatize->add_option("--eps,-e", eps, "privacy budget epsilon")->required();
    privatize->add_option("--mech,-m", mech_name, "mechanism: sym or xor")
        ->check(CLI::IsMember({"sym", "xor"}));
    privatize->add_option("--rng-seed", priv_seed,
                          "seed the flip noise (default: secure randomness)");
    privatize->add_option("--out,-o", priv_out, "output sketch file")->required();

    // merge
    auto* merge = app.add_subcommand("merge", "merge compatible sketches");
    std::vector<std::string> merge_in;
    std::string merge_out, op_name = "or";
    std::optional<uint64_t> merge_seed;
    merge->add_option("--in,-i", merge_in, "input sketch files (repeatable)")
        ->required()
        ->expected(-1);
    merge->add_option("--op", op_name, "bit operation: or, and, xor")
        ->check(CLI::IsMember({"or", "and", "xor"}));
    merge->add_option("--rng-seed", merge_seed,
                      "seed the merge randomness (default: secure randomness)");
    merge->add_option("--out,-o", merge_out, "output sketch file")->required();

    // estimate
    auto* estimate = app.add_subcommand("estimate", "estimate distinct count from a sketch");
    std::string est_in;
    bool as_json = false;
    estimate->add_option("--in,-i", est_in, "sketch file")->required();
    estimate->add_flag("--json", as_json, "machine-readable output");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run seeded error-curve simulations");
    sfm::SimulationSpec spec;
    std::string method_name = "sym", sim_out;
    std::vector<uint64_t> ns;
    simulate->add_option("--method", method_name, "sym, xor, or none")
        ->check(CLI::IsMember({"sym", "xor", "none"}));
    simulate->add_option("--eps,-e", spec.eps, "per-sketch budget (ignored for none)");
    simulate->add_option("--bits,-b", spec.buckets, "bucket count B");
    simulate->add_option("--levels,-l", spec.levels, "level count P");
    simulate->add_option("--n,-n", ns, "cardinalities (repeatable)")->required()->expected(-1);
    simulate->add_option("--trials,-t", spec.trials, "trials per cardinality");
    simulate->add_option("--fanout,-k", spec.fanout, "independently privatized copies to merge");
    simulate->add_option("--seed,-s", spec.seed, "master seed");
    simulate->add_flag("--disjoint", spec.disjoint,
                       "split items across the merged sketches instead of re-sketching");
    simulate->add_option("--threads", spec.threads, "worker threads (0 = all cores)");
    simulate->add_option("--out,-o", sim_out, "output CSV file, or - for stdout")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sketch->parsed()) {
            return cmd_sketch(input, bits, levels, hash_seed, out_path, keep_empty);
        }
        if (privatize->parsed()) {
            return cmd_privatize(priv_in, eps, mech_name, priv_seed, priv_out);
        }
        if (merge->parsed()) {
            return cmd_merge(merge_in, op_name, merge_seed, merge_out);
        }
        if (estimate->parsed()) {
            return cmd_estimate(est_in, as_json);
        }
        if (simulate->parsed()) {
            spec.method = method_name == "sym"   ? sfm::SimMethod::SfmSym
                          : method_name == "xor" ? sfm::SimMethod::SfmXor
                                                 : sfm::SimMethod::NonPrivate;
            spec.cardinalities = ns;
            return cmd_simulate(spec, sim_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
