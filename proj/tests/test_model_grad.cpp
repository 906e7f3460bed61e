#include "doctest.h"
#include "jointcast/harness/harness.hpp"
#include "jointcast/model/model.hpp"
#include "jointcast/model/objective.hpp"
#include "test_util.hpp"

using namespace jointcast;
using namespace jointcast::testing;

namespace {

struct Fixture {
  ModelConfig cfg = small_config();
  Scene scene = gradcheck_scene(3, cfg.history_steps, cfg.horizon);
  SceneGeometry geom = build_scene_geometry(scene, cfg);
  ParameterStore<double> store{11};
  Fixture() {
    declare_model_parameters(store, cfg);
    jitter_parameters(store, 12, 0.05);
  }
  GradcheckResult<double> check(const std::function<Var<double>(Context<double>&)>& body) {
    auto f = [&](Tape<double>& t) {
      Context<double> ctx{&t, false, 0.0, nullptr, nullptr};
      return body(ctx);
    };
    return finite_diff_check_store<double>(f, store, 1e-6, 3, 13);
  }
};

}  // namespace

TEST_CASE("map encoder gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) { return probe(encode_map(c, fx.geom, fx.cfg)); });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("agent encoder gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) { return probe(encode_scene(c, fx.geom, fx.cfg).agent_enc); });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("proposal gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) {
    auto enc = encode_scene(c, fx.geom, fx.cfg);
    return probe(propose(c, enc, fx.cfg).positions);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("refinement gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) {
    auto enc = encode_scene(c, fx.geom, fx.cfg);
    return probe(decode(c, enc, fx.cfg).refinement.positions);
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("score gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) { return probe(run_model(c, fx.geom, fx.cfg).scores.log_pi); });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("total loss gradients") {
  Fixture fx;
  const auto r = fx.check([&](Context<double>& c) {
    auto out = run_model(c, fx.geom, fx.cfg);
    return total_loss(out.decoded, out.scores, fx.geom.future_local).total;
  });
  INFO(r.worst);
  CHECK(r.max_rel_error < 1e-4);
}
