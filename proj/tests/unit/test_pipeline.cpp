#include "vsdf/pipeline.hpp"

#include <doctest.h>

#include <sstream>

using namespace vsdf;

namespace {

std::string text(const GeomParams& p) {
    std::ostringstream os;
    os.precision(17);
    os << p.transpose();
    return os.str();
}

ModelBundle tiny_model() {
    ModelBundle b;
    b.decoder = make_decoder<float>(8, 3, 32);
    EstimatorWeights<float> est(nn::Mlp<float>::random(estimator_architecture(8, 32), 4));
    est.out_shift = reference_target().cast<float>();
    est.out_scale.setConstant(0.05f);
    b.estimator = est;
    b.prior = LatentPrior{Eigen::VectorXd::Zero(8), Eigen::MatrixXd::Identity(8, 8) * 0.1};
    return b;
}

// What run_design should report for a latent measured on `grid`.
std::string measured(const ModelBundle& m, const LatentVector& z, const GridSpec& grid) {
    try {
        const auto mesh = decode_to_mesh(*m.decoder, z, grid).mesh;
        if (mesh.empty()) return "empty";
        return text(extract_params(mesh, extraction_for(grid)).params);
    } catch (const std::exception& e) {
        return e.what();
    }
}

std::string reported(const DesignRun& r) {
    if (r.extracted) return text(*r.extracted);
    return r.extract_error.find("empty zero level set") != std::string::npos ? "empty" : r.extract_error;
}

}  // namespace

TEST_CASE("label grid lives in config_json and survives a checkpoint") {
    ModelBundle m = tiny_model();
    CHECK(label_grid(m) == 0);
    m.config_json = R"({"stage":"train-sdf","epochs":3})";
    set_label_grid(m, 48);
    CHECK(label_grid(m) == 48);
    const auto back = ModelBundle::from_checkpoint(m.to_checkpoint());
    CHECK(label_grid(back) == 48);
    CHECK(back.config_json.find("\"epochs\":3") != std::string::npos);
    m.config_json = "not json";
    CHECK(label_grid(m) == 0);
}

TEST_CASE("designs are measured on the label lattice, meshed on the requested one") {
    ModelBundle m = tiny_model();
    LatentOptimConfig cfg;
    cfg.max_steps = 30;
    const GridSpec out{40, 1.0};

    const auto plain = run_design(m, reference_target(), 3, cfg, out);
    CHECK(plain.extract_grid == 40);
    CHECK(reported(plain) == measured(m, plain.optimization.latent, out));

    set_label_grid(m, 24);
    const auto labelled = run_design(m, reference_target(), 3, cfg, out);
    CHECK(labelled.extract_grid == 24);
    CHECK(labelled.mesh.vertices == plain.mesh.vertices);
    CHECK(reported(labelled) == measured(m, labelled.optimization.latent, GridSpec{24, 1.0}));
}

TEST_CASE("whitened penalty keeps the trace monotone") {
    const ModelBundle m = tiny_model();
    for (double reg : {0.0, 1e-4, 1e-2}) {
        LatentOptimConfig cfg;
        cfg.max_steps = 200;
        cfg.prior_reg = reg;
        const auto r = optimize_latent_with_prior(*m.estimator, *m.prior, reference_target(), 9, cfg);
        for (std::size_t i = 1; i < r.trace.rows.size(); ++i) CHECK(r.trace.rows[i].mse <= r.trace.rows[i - 1].mse);
    }
    LatentOptimConfig bad;
    bad.prior_reg = -1;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}
