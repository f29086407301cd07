#include <catch2/catch.hpp>

#include <sstream>

#include "sympacool/protocol.hpp"

using namespace sympacool;

TEST_CASE("config parsing") {
  SECTION("round trip through text") {
    std::istringstream is(R"(
# ferromagnetic chain setup
model.kind = transverse_ising
model.n = 5
model.g = 1.0
model.j = 5.0
bath.delta = auto
bath.gamma = 1.9
bath.g_sb = 1.15
init = all_up
t_max = 100
n_grid = 400
n_traj = 1000
seed = 42
)");
    auto fc = config_to_run(parse_config(is));
    CHECK(fc.run.model.kind == ModelKind::TransverseIsing);
    CHECK(fc.run.model.n_sites == 5);
    CHECK(!fc.run.bath.delta.has_value());
    CHECK(fc.run.bath.gamma == 1.9);
    CHECK(fc.run.bath.fy == 1.1);  // Ising default f
    CHECK(fc.n_traj == 1000);
    CHECK(fc.seed == 42);

    std::ostringstream os;
    write_config(os, run_to_config(fc));
    std::istringstream back(os.str());
    auto fc2 = config_to_run(parse_config(back));
    CHECK(fc2.run.bath.g_sb == fc.run.bath.g_sb);
    CHECK(fc2.run.resolved_t_max() == fc.run.resolved_t_max());
    CHECK(fc2.run.bath.site_weights.size() == 1);
    CHECK(fc2.run.bath.site_weights[0].site == 4);
  }
  SECTION("Heisenberg defaults: f values and two-site coupling") {
    std::istringstream is("model.kind = heisenberg\nmodel.n = 4\nmodel.j = 1\n");
    auto fc = config_to_run(parse_config(is));
    CHECK(fc.run.bath.fy == 2.3);
    REQUIRE(fc.run.bath.site_weights.size() == 2);
    CHECK(fc.run.bath.site_weights[0].site == 3);
    CHECK(fc.run.bath.site_weights[1].site == 2);
    CHECK(fc.run.bath.site_weights[1].weight == 0.5);
  }
  SECTION("errors carry line numbers and key names") {
    std::istringstream is("model.kind = transverse_ising\nbogus.key = 3\n");
    try {
      config_to_run(parse_config(is));
      FAIL("expected a throw");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("line 2") != std::string::npos);
      CHECK(msg.find("bogus.key") != std::string::npos);
    }
    std::istringstream neg("model.kind = ising\nmodel.n = 2\nbath.gamma = -1\n");
    CHECK_THROWS_WITH(config_to_run(parse_config(neg)),
                      Catch::Contains("gamma"));
    std::istringstream noeq("model.kind ising\n");
    CHECK_THROWS_WITH(parse_config(noeq), Catch::Contains("line 1"));
  }
  SECTION("bath.sites parsing") {
    std::istringstream is(
        "model.kind = ising\nmodel.n = 3\nbath.sites = 2:1.0,1:0.5\n");
    auto fc = config_to_run(parse_config(is));
    REQUIRE(fc.run.bath.site_weights.size() == 2);
    CHECK(fc.run.bath.site_weights[1].weight == 0.5);
  }
}

TEST_CASE("initial states") {
  SECTION("all up is basis index 0") {
    Vector v = materialize_initial_state({}, 3);
    CHECK(std::abs(v[0] - 1.0) < 1e-15);
  }
  SECTION("Neel convention: site 0 up") {
    InitialState init;
    init.kind = InitialStateKind::Neel;
    Vector v = materialize_initial_state(init, 3);
    // down at site 1 only: bit 1 of a 3-bit register -> index 2
    CHECK(std::abs(v[2] - 1.0) < 1e-15);
    Vector v4 = materialize_initial_state(init, 4);
    // down at sites 1 and 3 -> bits 2 and 0 -> index 5
    CHECK(std::abs(v4[5] - 1.0) < 1e-15);
  }
  SECTION("random products are seed-deterministic") {
    InitialState a;
    a.kind = InitialStateKind::RandomProduct;
    a.random_seed = 77;
    Vector v1 = materialize_initial_state(a, 6);
    Vector v2 = materialize_initial_state(a, 6);
    CHECK((v1 - v2).norm() == 0.0);
    a.random_seed = 78;
    CHECK((materialize_initial_state(a, 6) - v1).norm() > 0.5);
  }
  SECTION("bath spin appended in its dark state") {
    Vector sys(2);
    sys << 0.6, 0.8;
    Vector joint = join_with_bath_down(sys);
    CHECK(std::abs(joint[1] - 0.6) < 1e-15);
    CHECK(std::abs(joint[3] - 0.8) < 1e-15);
    CHECK(std::abs(joint[0]) == 0.0);
  }
  SECTION("explicit states must be normalized and sized") {
    InitialState init;
    init.kind = InitialStateKind::Explicit;
    init.explicit_state = Vector::Zero(4);
    CHECK_THROWS_AS(materialize_initial_state(init, 2), ValidationError);
    CHECK_THROWS_AS(materialize_initial_state(init, 3), ValidationError);
  }
}

TEST_CASE("resolve_delta") {
  RunSpec run;
  run.model = {ModelKind::Heisenberg, 2, 1.0, 1.0};
  SECTION("explicit values pass through") {
    run.bath.delta = 2.0;
    CHECK(resolve_delta(run) == 2.0);
  }
  SECTION("auto resolves to the many-body gap") {
    CHECK(resolve_delta(run) == Approx(4.0).margin(1e-10));
  }
}

TEST_CASE("run_cooling basics") {
  SECTION("decoupled bath leaves the system energy flat") {
    RunSpec run;
    run.model = {ModelKind::TransverseIsing, 2, 1.0, 5.0};
    run.bath.g_sb = 0.0;
    run.bath.delta = 3.0;
    run.t_max = 5.0;
    run.n_grid = 41;
    auto cr = run_cooling(run, 100, 17);
    const auto& e = cr.ens.at("energy");
    for (std::size_t i = 0; i < e.mean.size(); ++i)
      CHECK(std::abs(e.mean[i] - e.mean[0]) <= 3 * e.sem[i] + 1e-7);
  }
  SECTION("epsilon series is the affine image of the energy series") {
    RunSpec run;
    run.model = {ModelKind::TransverseIsing, 2, 1.0, 5.0};
    run.bath.gamma = 1.9;
    run.bath.g_sb = 1.15;
    run.t_max = 4.0;
    run.n_grid = 21;
    auto cr = run_cooling(run, 50, 3);
    const auto& e = cr.ens.at("energy");
    const auto& eps = cr.ens.at("epsilon");
    for (std::size_t i = 0; i < e.mean.size(); ++i)
      CHECK(eps.mean[i] ==
            Approx((e.mean[i] - cr.spectrum.e0) / cr.spectrum.gap).margin(1e-12));
  }
}

TEST_CASE("preparation time") {
  EnsembleResult ens;
  ens.times = make_grid(10.0, 1001);
  SeriesStats eps;
  for (double t : ens.times) {
    eps.mean.push_back(std::exp(-t));
    eps.sem.push_back(0.0);
  }
  ens.series["epsilon"] = eps;

  SECTION("analytic crossing of exp(-t) at 0.2 is ln 5") {
    CHECK(preparation_time(ens, 0.2) == Approx(std::log(5.0)).margin(1e-3));
  }
  SECTION("already below target: t_p = 0") {
    CHECK(preparation_time(ens, 1.5) == 0.0);
  }
  SECTION("never crossing raises") {
    CHECK_THROWS_AS(preparation_time(ens, 1e-9), NotConvergedError);
  }
}

TEST_CASE("sweep grid validation") {
  RunSpec run;
  run.model = {ModelKind::TransverseIsing, 2, 1.0, 5.0};
  CHECK_THROWS_AS(sweep_delta(run, {1.0}, 10, 1), ValidationError);
  CHECK_THROWS_AS(sweep_delta(run, {1.0, 2.0}, 10, 1), ValidationError);
  CHECK_THROWS_AS(sweep_delta(run, {1.0, 1.0, 2.0}, 10, 1), ValidationError);
}

TEST_CASE("small optimal cooling run: epsilon tracks 1 - f at late times") {
  RunSpec run;
  run.model = {ModelKind::TransverseIsing, 3, 1.0, 5.0};
  run.bath.gamma = 1.9;
  run.bath.g_sb = 1.15;
  run.t_max = 25.0;
  run.n_grid = 101;
  auto cr = run_cooling(run, 400, 71);
  const auto& eps = cr.ens.at("epsilon");
  const auto& fid = cr.ens.at("fidelity");
  // low-energy relation, averaged over the final quarter of the run
  double dev = 0.0;
  int count = 0;
  for (std::size_t i = 3 * eps.mean.size() / 4; i < eps.mean.size(); ++i) {
    dev += std::abs(eps.mean[i] - (1.0 - fid.mean[i]));
    ++count;
  }
  CHECK(dev / count < 0.05);
  // cooling must have removed energy
  CHECK(cr.final_mean("energy") < cr.ens.at("energy").mean.front());
}

TEST_CASE("preparation time is reproducible across master seeds") {
  RunSpec run;
  run.model = {ModelKind::TransverseIsing, 3, 1.0, 5.0};
  run.bath.gamma = 1.9;
  run.bath.g_sb = 1.15;
  run.t_max = 30.0;
  run.n_grid = 201;
  const double t1 = preparation_time(run_cooling(run, 400, 100).ens, 0.2);
  const double t2 = preparation_time(run_cooling(run, 400, 200).ens, 0.2);
  CHECK(t1 > 0.0);
  CHECK(std::abs(t1 - t2) / t1 < 0.15);
}

TEST_CASE("decoherence study at kappa = 0 reproduces the baseline") {
  RunSpec run;
  run.model = {ModelKind::TransverseIsing, 2, 1.0, 5.0};
  run.bath.gamma = 1.9;
  run.bath.g_sb = 1.15;
  run.t_max = 25.0;
  run.n_grid = 101;
  auto study = decoherence_study(run, {0.0, 0.02}, 150, 5, 0.8);
  REQUIRE(study.points.size() == 2);
  CHECK(study.t_ref > 0.0);
  CHECK(study.points[0].kappa_tp == 0.0);
  // noise can only heat: epsilon at t_p non-decreasing within noise
  CHECK(study.points[1].eps_at_tp >=
        study.points[0].eps_at_tp - 3 * study.points[1].eps_sem);
}
