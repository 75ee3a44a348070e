#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "sqkd/adversary.hpp"
#include "sqkd/qstate.hpp"
#include "sqkd/rng.hpp"

using namespace sqkd;

namespace {

const double r2 = 1.0 / std::sqrt(2.0);

std::string temp_file(const std::string& stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

void write_matrix_json(const std::string& path, std::size_t dim,
                       const std::vector<double>& real_entries) {
  nlohmann::json j;
  j["dim"] = dim;
  nlohmann::json ents = nlohmann::json::array();
  for (double v : real_entries) ents.push_back({v, 0.0});
  j["entries"] = ents;
  std::ofstream out(path);
  out << j;
}

const std::vector<double> kCnotEntries = {1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 0};

}  // namespace

TEST_CASE("protocol kind names") {
  REQUIRE(to_string(ProtocolKind::Mock) == "mock");
  REQUIRE(to_string(ProtocolKind::P1) == "p1");
  REQUIRE(to_string(ProtocolKind::P1Prime) == "p1prime");
  REQUIRE(to_string(ProtocolKind::P2) == "p2");
}

TEST_CASE("saturating powers") {
  REQUIRE(pow_saturating(2, 10) == 1024);
  REQUIRE(pow_saturating(2, 0) == 1);
  REQUIRE(pow_saturating(1, 1000) == 1);
  REQUIRE(pow_saturating(0, 3) == 0);
  REQUIRE(pow_saturating(2, 70) == std::numeric_limits<std::size_t>::max());
}

TEST_CASE("unitary files round-trip and are validated") {
  const std::string good = temp_file("att_good.json");
  write_matrix_json(good, 4, kCnotEntries);
  UnitaryMatrix u = load_unitary_json(good);
  REQUIRE(u.dim() == 4);
  REQUIRE((u.mat() - cnot_qubit_to_probe().mat()).cwiseAbs().maxCoeff() < 1e-15);

  REQUIRE_THROWS_AS(load_unitary_json(temp_file("att_missing_zzz.json")), config_error);

  const std::string garbage = temp_file("att_garbage.json");
  {
    std::ofstream out(garbage);
    out << "not json at all {";
  }
  REQUIRE_THROWS_AS(load_unitary_json(garbage), config_error);

  const std::string nofields = temp_file("att_nofields.json");
  {
    std::ofstream out(nofields);
    out << "{\"dim\": 2}";
  }
  REQUIRE_THROWS_AS(load_unitary_json(nofields), config_error);

  const std::string shortfile = temp_file("att_short.json");
  write_matrix_json(shortfile, 4, {1, 0, 0, 1});
  REQUIRE_THROWS_AS(load_unitary_json(shortfile), config_error);

  const std::string nonunitary = temp_file("att_nonunitary.json");
  write_matrix_json(nonunitary, 2, {1, 0, 0, 0.5});
  REQUIRE_THROWS_AS(load_unitary_json(nonunitary), numeric_error);

  const std::string badentry = temp_file("att_badentry.json");
  {
    std::ofstream out(badentry);
    out << "{\"dim\": 1, \"entries\": [[1.0]]}";
  }
  REQUIRE_THROWS_AS(load_unitary_json(badentry), config_error);
}

TEST_CASE("transit-controlled gates have the documented action") {
  SubsystemLayout lay{2, 1, 0, kDefaultMaxTotalDim};

  SECTION("copy gate entangles the probe with a superposed qubit") {
    StateVector st = prepare(lay, 0, {BasisState::XPlus});
    apply_unitary(st, cnot_qubit_to_probe(), {0, 1});
    REQUIRE(std::abs(st.amp[0] - cplx{r2, 0.0}) < 1e-12);  // |p=0,q=0>
    REQUIRE(std::abs(st.amp[3] - cplx{r2, 0.0}) < 1e-12);  // |p=1,q=1>
    REQUIRE(std::abs(st.amp[1]) < 1e-12);
    REQUIRE(std::abs(st.amp[2]) < 1e-12);
  }
  SECTION("copy gate flips the probe on a definite 1") {
    StateVector st = prepare(lay, 0, {BasisState::Z1});
    apply_unitary(st, cnot_qubit_to_probe(), {0, 1});
    REQUIRE(std::abs(st.amp[3] - cplx{1.0, 0.0}) < 1e-12);
  }
  SECTION("partial rotation splits the probe amplitude by sin/cos") {
    const double th = std::numbers::pi / 6.0;
    StateVector st = prepare(lay, 0, {BasisState::XPlus});
    apply_unitary(st, controlled_probe_rotation(th), {0, 1});
    REQUIRE(std::abs(st.amp[0] - cplx{r2, 0.0}) < 1e-12);
    REQUIRE(std::abs(st.amp[1] - cplx{r2 * std::cos(th), 0.0}) < 1e-12);
    REQUIRE(std::abs(st.amp[3] - cplx{r2 * std::sin(th), 0.0}) < 1e-12);
  }
  SECTION("quarter-turn rotation reproduces the copy gate statistics") {
    const UnitaryMatrix rot = controlled_probe_rotation(std::numbers::pi / 2.0);
    REQUIRE(std::abs(rot.mat()(3, 1) - cplx{1.0, 0.0}) < 1e-15);
    REQUIRE(std::abs(rot.mat()(1, 3) - cplx{-1.0, 0.0}) < 1e-15);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      StateVector st = prepare(lay, 0, {BasisState::Z1});
      apply_unitary(st, rot, {0, 1});
      REQUIRE(measure_probe(st, rng) == 1);
    }
  }
}

TEST_CASE("attack capability flags") {
  auto flags = [](const std::string& name) {
    AttackConfig cfg;
    cfg.name = name;
    return make_attack(cfg);
  };
  REQUIRE(flags("no_attack")->local());
  REQUIRE(flags("no_attack")->backward_trivial());
  REQUIRE(flags("no_attack")->joint());
  REQUIRE_FALSE(flags("no_attack")->probe_bits_are_guesses());
  REQUIRE(flags("no_attack")->local_probe_dim() == 1);

  REQUIRE(flags("cnot_mirror")->local());
  REQUIRE_FALSE(flags("cnot_mirror")->backward_trivial());
  REQUIRE(flags("cnot_mirror")->probe_bits_are_guesses());
  REQUIRE(flags("cnot_mirror")->local_probe_dim() == 2);
  REQUIRE(flags("cnot_mirror")->joint_probe_dim(3) == 8);
  REQUIRE(flags("cnot_mirror")->joint_probe_dim(70) == std::numeric_limits<std::size_t>::max());

  REQUIRE(flags("cnot_forward_only")->backward_trivial());
  REQUIRE(flags("intercept_resend_z")->backward_trivial());
  REQUIRE(flags("intercept_resend_z")->local_probe_dim() == 1);
  REQUIRE(flags("rotation_probe")->backward_trivial());

  REQUIRE_FALSE(flags("hamming_weight")->local());
  REQUIRE(flags("hamming_weight")->joint());
  REQUIRE(flags("hamming_weight")->counter_sampler());
  REQUIRE_FALSE(flags("hamming_weight")->probe_bits_are_guesses());
  REQUIRE(flags("hamming_weight")->joint_probe_dim(16) == 17);
  REQUIRE_FALSE(flags("no_attack")->counter_sampler());

  AttackConfig unknown;
  unknown.name = "evil_twin";
  REQUIRE_THROWS_AS(make_attack(unknown), config_error);
  REQUIRE_THROWS_AS(RotationProbeAttack(-0.1), config_error);
  REQUIRE_THROWS_AS(RotationProbeAttack(2.0), config_error);
  AttackConfig rot;
  rot.name = "rotation_probe";
  rot.theta = 0.7;
  REQUIRE(make_attack(rot)->describe().find("theta") != std::string::npos);
}

TEST_CASE("mirror attack is invisible round-locally and reads measured rounds") {
  CnotMirrorAttack atk;
  SubsystemLayout lay{2, 1, 0, kDefaultMaxTotalDim};
  Rng rng(17);

  SECTION("forward then backward is the identity on any input") {
    for (BasisState s :
         {BasisState::Z0, BasisState::Z1, BasisState::XPlus, BasisState::XMinus}) {
      auto sess = atk.make_session(1);
      StateVector st = prepare(lay, 0, {s});
      StateVector ref = st;
      sess->forward_local(st, 1, rng);
      sess->backward_local(st, 1, rng);
      for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(st.amp[i] - ref.amp[i]) < 1e-12);
    }
  }
  SECTION("probe copies a computational bit exactly") {
    auto sess = atk.make_session(2);
    StateVector st1 = prepare(lay, 0, {BasisState::Z1});
    sess->forward_local(st1, 1, rng);
    sess->absorb_round(1, std::move(st1));
    StateVector st2 = prepare(lay, 0, {BasisState::Z0});
    sess->forward_local(st2, 2, rng);
    sess->absorb_round(2, std::move(st2));
    EveView view;
    EveRecord rec = sess->finalize(view, rng);
    REQUIRE(rec.guesses == "10");
  }
  SECTION("a round that never returns is read out immediately") {
    auto sess = atk.make_session(1);
    StateVector st = prepare(lay, 0, {BasisState::Z1});
    sess->forward_local(st, 1, rng);
    sess->no_return_local(st, 1, rng);
    EveView view;
    EveRecord rec = sess->finalize(view, rng);
    REQUIRE(rec.guesses == "1");
  }
  SECTION("unvisited rounds stay unknown") {
    auto sess = atk.make_session(3);
    StateVector st = prepare(lay, 0, {BasisState::Z1});
    sess->forward_local(st, 2, rng);
    sess->absorb_round(2, std::move(st));
    EveView view;
    EveRecord rec = sess->finalize(view, rng);
    REQUIRE(rec.guesses == "?1?");
  }
}

TEST_CASE("intercept-resend measures in transit and disturbs conjugate states") {
  InterceptResendZAttack atk;
  SubsystemLayout lay{1, 1, 0, kDefaultMaxTotalDim};
  Rng rng(23);

  auto sess = atk.make_session(1);
  StateVector st = prepare(lay, 0, {BasisState::Z1});
  sess->forward_local(st, 1, rng);
  EveView view;
  REQUIRE(sess->finalize(view, rng).guesses == "1");
  REQUIRE(std::abs(std::abs(st.amp[1]) - 1.0) < 1e-12);  // collapsed, passed on

  int x_errors = 0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    auto s = atk.make_session(1);
    StateVector x = prepare(lay, 0, {BasisState::XPlus});
    s->forward_local(x, 1, rng);
    x_errors += measure_qubit(x, 1, Basis::X, rng);  // 1 = flipped to minus
  }
  REQUIRE(std::abs(x_errors / static_cast<double>(n) - 0.5) < 0.05);
}

TEST_CASE("default session finalize paths") {
  NoAttack atk;
  Rng rng(3);
  auto sess = atk.make_session(2);
  EveView view;
  EveRecord rec = sess->finalize(view, rng);
  REQUIRE(rec.probe_outcome == -1);
  REQUIRE(rec.guesses.empty());

  auto sess2 = atk.make_session(2);
  sess2->record_classical_probe(5);
  EveRecord rec2 = sess2->finalize(view, rng);
  REQUIRE(rec2.probe_outcome == 5);
  REQUIRE(rec2.guesses.empty());
}

TEST_CASE("whole-register form of a per-round attack") {
  CnotMirrorAttack atk;
  const std::size_t n = 2;
  SubsystemLayout lay{atk.joint_probe_dim(n), n, 0, kDefaultMaxTotalDim};
  Rng rng(29);
  StateVector init = prepare(lay, 0, {BasisState::Z1, BasisState::XMinus});

  SECTION("forward then paired backward is the identity") {
    auto sess = atk.make_session(n);
    StateVector st = init;
    sess->joint_forward(st, {1, 2});
    sess->joint_backward_paired(st, {1, 2}, {true, true});
    for (std::size_t i = 0; i < st.total_dim(); ++i)
      REQUIRE(std::abs(st.amp[i] - init.amp[i]) < 1e-12);
  }
  SECTION("composite probe factors map to rounds most-significant-first") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::Z1, BasisState::Z0});
    sess->joint_forward(st, {1, 2});
    EveView view;
    EveRecord rec = sess->finalize_joint(st, view, rng);
    REQUIRE(rec.probe_outcome == 2);  // binary "10": round 1 bit, round 2 bit
    REQUIRE(rec.guesses == "10");
  }
  SECTION("block sequential steps replay the parallel schedule exactly") {
    auto par = atk.make_session(n);
    StateVector a = init;
    par->joint_forward(a, {1, 2});
    par->joint_backward_paired(a, {1, 2}, {true, true});
    auto seq = atk.make_session(n);
    seq->set_sequential_encoding(SeqEncoding::Block);
    StateVector b = init;
    for (std::size_t k = 1; k <= n + 1; ++k) seq->joint_step(b, k, {1, 2}, {true, true});
    for (std::size_t i = 0; i < a.total_dim(); ++i) REQUIRE(a.amp[i] == b.amp[i]);
  }
  SECTION("per-qubit sequential steps compose to the same operator") {
    auto par = atk.make_session(n);
    StateVector a = init;
    par->joint_forward(a, {1, 2});
    par->joint_backward_paired(a, {1, 2}, {true, true});
    auto seq = atk.make_session(n);
    seq->set_sequential_encoding(SeqEncoding::PerQubit);
    StateVector b = init;
    for (std::size_t k = 1; k <= n + 1; ++k) seq->joint_step(b, k, {1, 2}, {true, true});
    for (std::size_t i = 0; i < a.total_dim(); ++i) REQUIRE(std::abs(a.amp[i] - b.amp[i]) < 1e-12);
  }
  SECTION("an undo-style attack cannot act on an anonymized return block") {
    auto sess = atk.make_session(n);
    StateVector st = init;
    REQUIRE_THROWS_AS(sess->joint_backward_block(st, {2, 1}), config_error);
    CnotForwardOnlyAttack fwd;
    auto fsess = fwd.make_session(n);
    REQUIRE_NOTHROW(fsess->joint_backward_block(st, {2, 1}));  // nothing to undo
  }
}

TEST_CASE("weight-counter attack shifts its counter by block weights") {
  HammingWeightAttack atk;
  const std::size_t n = 2;
  SubsystemLayout lay{atk.joint_probe_dim(n), n, 0, kDefaultMaxTotalDim};
  Rng rng(31);

  SECTION("definite bits add up and subtract back out") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::Z1, BasisState::Z1});
    sess->joint_forward(st, {1, 2});
    REQUIRE(std::abs(st.amp[2 * 4 + 3] - cplx{1.0, 0.0}) < 1e-12);  // counter at 2
    sess->joint_backward_block(st, {2, 1});  // arrival order must not matter
    REQUIRE(std::abs(st.amp[3] - cplx{1.0, 0.0}) < 1e-12);  // counter back at 0
  }
  SECTION("superposed input entangles the counter with total weight") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::XPlus, BasisState::Z0});
    sess->joint_forward(st, {1, 2});
    REQUIRE(std::abs(st.amp[0 * 4 + 0] - cplx{r2, 0.0}) < 1e-12);
    REQUIRE(std::abs(st.amp[1 * 4 + 2] - cplx{r2, 0.0}) < 1e-12);
  }
  SECTION("paired backward subtracts only the returned rounds") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::Z1, BasisState::Z1});
    sess->joint_forward(st, {1, 2});
    sess->joint_backward_paired(st, {1, 2}, {true, false});
    REQUIRE(std::abs(st.amp[1 * 4 + 3] - cplx{1.0, 0.0}) < 1e-12);  // one bit still counted
  }
  SECTION("finalize reads the counter without bit guesses") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::Z1, BasisState::Z0});
    sess->joint_forward(st, {1, 2});
    EveView view;
    EveRecord rec = sess->finalize_joint(st, view, rng);
    REQUIRE(rec.probe_outcome == 1);
    REQUIRE(rec.guesses.empty());
  }
  SECTION("sequential steps act only at the bracketing steps") {
    auto sess = atk.make_session(n);
    StateVector st = prepare(lay, 0, {BasisState::Z1, BasisState::Z0});
    sess->joint_step(st, 1, {1, 2}, {true, true});
    sess->joint_step(st, 2, {1, 2}, {true, true});  // interior step: no-op
    REQUIRE(std::abs(st.amp[1 * 4 + 2] - cplx{1.0, 0.0}) < 1e-12);  // counter holds 1
    sess->joint_step(st, 3, {1, 2}, {true, true});
    REQUIRE(std::abs(st.amp[0 * 4 + 2] - cplx{1.0, 0.0}) < 1e-12);  // cancelled on return
  }
}

TEST_CASE("user-supplied per-round attacks load from files") {
  const std::string fwd = temp_file("att_user_fwd.json");
  write_matrix_json(fwd, 4, kCnotEntries);

  UserLocalAttack atk(2, fwd, "");
  REQUIRE(atk.name() == "user_local");
  REQUIRE(atk.local());
  REQUIRE(atk.backward_trivial());
  REQUIRE(atk.local_probe_dim() == 2);
  REQUIRE(atk.probe_bits_are_guesses());

  // behaves exactly like the built-in forward-only copy attack
  CnotForwardOnlyAttack ref;
  SubsystemLayout lay{2, 1, 0, kDefaultMaxTotalDim};
  Rng rng(37);
  for (BasisState s : {BasisState::Z0, BasisState::Z1, BasisState::XPlus}) {
    auto su = atk.make_session(1);
    auto sr = ref.make_session(1);
    StateVector a = prepare(lay, 0, {s});
    StateVector b = a;
    su->forward_local(a, 1, rng);
    sr->forward_local(b, 1, rng);
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(a.amp[i] == b.amp[i]);
  }

  REQUIRE_THROWS_AS(UserLocalAttack(2, "", ""), config_error);
  REQUIRE_THROWS_AS(UserLocalAttack(0, fwd, ""), config_error);
  const std::string small = temp_file("att_user_small.json");
  write_matrix_json(small, 2, {0, 1, 1, 0});
  REQUIRE_THROWS_AS(UserLocalAttack(2, small, ""), config_error);

  // factory route with both files
  UserLocalAttack mirror(2, fwd, fwd);
  REQUIRE_FALSE(mirror.backward_trivial());
  auto sess = mirror.make_session(1);
  StateVector st = prepare(lay, 0, {BasisState::Z1});
  StateVector orig = st;
  sess->forward_local(st, 1, rng);
  sess->backward_local(st, 1, rng);
  for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(st.amp[i] - orig.amp[i]) < 1e-12);
}
