import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import data_env, load
from fwdsample.codegen import CodeSegment, SamplingPlan, derive_plan, synthesize_ppc
from fwdsample.factorgraph import build_factor_graph, restrict_for_prior
from fwdsample.frontend import parse, parse_statement
from fwdsample.runtime import (
    DrawTable,
    Interpreter,
    MhConfig,
    RngPool,
    RuntimeFailure,
    equivalence_check,
    rank_uniformity,
    read_csv,
    reference_joint_sampler,
    run_plan,
    run_sbc,
    sbc_ranks,
)
from fwdsample.runtime.checks import compare_column
from fwdsample.runtime.sampling import run_program

N_RNG = 100_000

# (call, frozen scipy oracle, continuous)
RNG_CASES = [
    ("normal_rng(1.5, 2)", stats.norm(1.5, 2), True),
    ("lognormal_rng(0.2, 0.5)", stats.lognorm(0.5, scale=np.exp(0.2)), True),
    ("exponential_rng(2)", stats.expon(scale=0.5), True),
    ("gamma_rng(3, 2)", stats.gamma(3, scale=0.5), True),
    ("beta_rng(2, 5)", stats.beta(2, 5), True),
    ("uniform_rng(-1, 3)", stats.uniform(-1, 4), True),
    ("bernoulli_rng(0.3)", stats.bernoulli(0.3), False),
    ("poisson_rng(3.5)", stats.poisson(3.5), False),
    ("binomial_rng(10, 0.25)", stats.binom(10, 0.25), False),
]


def draw(call, n=N_RNG, seed=5):
    env = {}
    Interpreter(n, {}, RngPool(seed)).run([parse_statement(f"x = {call};")], env)
    return env["x"].reshape(-1)


def within_se(sample, mean, var, k=4.0):
    n = sample.size
    assert abs(sample.mean() - mean) <= k * np.sqrt(var / n), (sample.mean(), mean)


@pytest.mark.parametrize("call,dist,continuous", RNG_CASES, ids=[c[0] for c in RNG_CASES])
def test_rng_moments_and_ks(call, dist, continuous):
    x = draw(call).astype(float)
    mean, var = float(dist.mean()), float(dist.var())
    within_se(x, mean, var)
    # variance: SE from the fourth central moment
    m4 = float(dist.moment(4) - 4 * dist.moment(3) * mean + 6 * dist.moment(2) * mean ** 2 - 3 * mean ** 4)
    assert abs(x.var() - var) <= 4 * np.sqrt((m4 - var ** 2) / x.size)
    if continuous:
        assert stats.kstest(x, dist.cdf).pvalue >= 1e-3


def test_exponential_mean_example():
    x = draw("exponential_rng(2)")
    assert abs(x.mean() - 0.5) <= 4 * 0.5 / np.sqrt(x.size)


def test_rng_is_reproducible():
    np.testing.assert_array_equal(draw("normal_rng(1, 1)", 10, seed=42), draw("normal_rng(1, 1)", 10, seed=42))
    assert not np.array_equal(draw("normal_rng(1, 1)", 10, seed=42), draw("normal_rng(1, 1)", 10, seed=43))


def test_rng_domain_error():
    plan = derive_plan(load("eight_schools"), "predictive").plan
    env = data_env("eight_schools")
    env["theta"] = np.zeros((1, 8))
    env["sigma"] = np.zeros((1, 8))
    with pytest.raises(RuntimeFailure, match="y"):
        run_plan(plan, env, 3, seed=1)


# ------------------------------------------------------------ Metropolis

def pdf_plan(decl_src, stmt_src):
    prog = parse(f"parameters {{ {decl_src} }} model {{ {stmt_src} }}")
    (d,) = prog.block_stmts("parameters")
    stmts = prog.block_stmts("model")
    seg = CodeSegment("PDF", d.name, stmts)
    return SamplingPlan([seg], "prior", [d.name], {d.name: d})


def mh_draws(decl_src, stmt_src, n=20_000, seed=3, cfg=None):
    plan = pdf_plan(decl_src, stmt_src)
    return run_plan(plan, {}, n, seed, cfg).columns[plan.drawn[0]]


def test_completing_the_square():
    x = mh_draws("real mu;", "target += -(mu - 1)^2;")
    within_se(x, 1.0, 0.5)
    assert abs(x.std() - np.sqrt(0.5)) <= 0.02 * np.sqrt(0.5)


def test_normal_kernel_matches_rng():
    x = mh_draws("real x;", "target += normal_lpdf(x | 0, 1);")
    y = draw("normal_rng(0, 1)", 20_000)
    assert abs(x.mean() - y.mean()) <= 4 * np.sqrt(2 / 20_000)


def test_reject_gives_half_normal():
    x = mh_draws("real x;", 'if (x < 0) { reject("neg"); } target += normal_lpdf(x | 0, 1);')
    assert np.all(x >= 0)
    within_se(x, np.sqrt(2 / np.pi), 1 - 2 / np.pi)


@pytest.mark.parametrize("decl,density,dist", [
    ("real x;", "normal_lpdf(x | 1.5, 2)", stats.norm(1.5, 2)),
    ("real<lower=0> x;", "lognormal_lpdf(x | 0.2, 0.5)", stats.lognorm(0.5, scale=np.exp(0.2))),
    ("real<lower=0> x;", "exponential_lpdf(x | 2)", stats.expon(scale=0.5)),
    ("real<lower=0> x;", "gamma_lpdf(x | 3, 2)", stats.gamma(3, scale=0.5)),
    ("real<lower=0, upper=1> x;", "beta_lpdf(x | 2, 5)", stats.beta(2, 5)),
    ("real<lower=-1, upper=3> x;", "uniform_lpdf(x | -1, 3)", stats.uniform(-1, 4)),
])
def test_metropolis_matches_builtin_moments(decl, density, dist):
    x = mh_draws(decl, f"target += {density};", n=8192)
    within_se(x, float(dist.mean()), float(dist.var()))


def test_discrete_pdf_variable_is_an_error():
    with pytest.raises(RuntimeFailure, match="discrete"):
        mh_draws("int k;", "target += -k;", n=4)


def test_nan_density_at_init_is_an_error():
    with pytest.raises(RuntimeFailure, match="NaN"):
        mh_draws("real x;", "target += log(-1 - x^2);", n=4)


def test_all_rejected_warmup_warns():
    with pytest.warns(RuntimeWarning, match="rejected"):
        # support is the init box; proposals this wide practically never land in it
        mh_draws("real x;", 'if (x < -2 || x > 2) { reject("out"); }', n=4,
                 cfg=MhConfig(step_size=1e7, warmup=20, inner_iters=2))


def test_bounded_rng_is_a_support_restriction():
    plan = derive_plan(load("eight_schools"), "prior").plan
    t = run_plan(plan, data_env("eight_schools"), 20_000, seed=9, cfg=MhConfig(warmup=100, inner_iters=20))
    tau = t.columns["tau"]
    assert np.all(tau >= 0)
    truncated = stats.truncnorm(-1, np.inf, loc=1, scale=1)
    within_se(tau, float(truncated.mean()), float(truncated.var()))


# ------------------------------------------------------------ plans

def test_plan_table_shape_and_determinism():
    plan = derive_plan(load("eight_schools"), "prior").plan
    env = data_env("eight_schools")
    a = run_plan(plan, env, 3, seed=42)
    b = run_plan(plan, env, 3, seed=42)
    assert a.names == ["mu", "tau", "theta"] and a.n == 3
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != run_plan(plan, env, 3, seed=43).to_csv()


def test_empty_plan_gives_empty_table():
    plan = SamplingPlan([], "prior", [], {})
    assert run_plan(plan, {}, 5, seed=1).names == []


def test_prior_predictive_columns():
    _, plan = synthesize_ppc(load("eight_schools"))
    t = run_plan(plan, data_env("eight_schools"), 4, seed=2, cfg=MhConfig(warmup=20, inner_iters=5))
    assert "y_sim" in t.names


def test_missing_data_is_reported():
    plan = derive_plan(load("eight_schools"), "predictive").plan
    with pytest.raises(RuntimeFailure, match="missing data"):
        run_plan(plan, {}, 2, seed=1)


def test_program_keep_and_thin_shapes():
    prog = parse("parameters { real mu; } model { mu ~ normal(0, 1); } generated quantities { real z; z = mu + 1; }")
    run = run_program(prog, {}, 5, seed=1, cfg=MhConfig(warmup=10), keep=4, thin=2)
    assert run.draws["mu"].shape == (5, 4)
    np.testing.assert_allclose(run.draws["z"], run.draws["mu"] + 1)


# ------------------------------------------------------------ reference sampler

def test_reference_standard_normal():
    g = build_factor_graph(parse("parameters { real x; } model { x ~ normal(0, 1); }"))
    t = reference_joint_sampler(g, {}, 50_000, seed=4)
    x = t.columns["x"]
    se = np.std([x[t.chains == c].mean() for c in np.unique(t.chains)], ddof=1) / np.sqrt(len(np.unique(t.chains)))
    assert abs(x.mean()) <= 4 * se
    assert abs(x.var() - 1) <= 0.05


def test_reference_respects_reject_region():
    g = build_factor_graph(load("half_normal"))
    t = reference_joint_sampler(g, {}, 5000, seed=4)
    assert np.all(t.columns["x"] >= 0)


def test_reference_eight_schools_mu():
    g = restrict_for_prior(build_factor_graph(load("eight_schools")))
    t = reference_joint_sampler(g, data_env("eight_schools"), 20_000, seed=8)
    mu = t.columns["mu"]
    assert abs(mu.mean() - 1) < 0.05 and abs(mu.std() - np.sqrt(0.5)) < 0.03


def test_reference_needs_single_data_row():
    g = build_factor_graph(load("conjugate"))
    env = {"N": np.array([5]), "y": np.zeros((2, 5))}
    with pytest.raises(RuntimeFailure, match="rows"):
        reference_joint_sampler(g, env, 10, seed=1)


# ------------------------------------------------------------ checks

def test_identical_tables_pass():
    rng = np.random.default_rng(0)
    t = DrawTable({"a": rng.normal(size=2000), "b": rng.normal(size=(2000, 2))})
    report = equivalence_check(t, t)
    assert report.passed
    assert report.lines()[0] == "overall: PASS"
    assert [v.name for v in report.variables] == ["a", "b[1]", "b[2]"]


def test_shifted_table_fails():
    rng = np.random.default_rng(0)
    a = DrawTable({"x": rng.normal(size=5000)})
    b = DrawTable({"x": rng.normal(0.3, 1, size=5000)})
    report = equivalence_check(a, b)
    assert not report.passed and report.failed() == ["x"]


def test_mismatched_columns_error():
    with pytest.raises(ValueError):
        equivalence_check(DrawTable({"x": np.zeros(3)}), DrawTable({"y": np.zeros(3)}))


def test_same_distribution_samples_pass(rng):
    c = compare_column("x", rng.gamma(2, size=20_000), rng.gamma(2, size=20_000))
    assert c.passed


def test_rank_single_posterior_draw():
    r = sbc_ranks({"mu": np.array([0.0])}, {"mu": np.array([[1.0]])})
    assert r["mu"].tolist() == [0]


def test_exchangeable_draws_give_uniform_ranks(rng):
    reps, L = 500, 31
    # prior draw and posterior draws exchangeable given a shared centre
    centre = rng.normal(size=reps)
    prior = centre + rng.normal(size=reps)
    post = centre[:, None] + rng.normal(size=(reps, L))
    assert rank_uniformity(sbc_ranks({"mu": prior}, {"mu": post}), L).passed
    assert not rank_uniformity(sbc_ranks({"mu": prior}, {"mu": post + 1}), L).passed


def test_run_sbc_conjugate():
    from fwdsample.codegen import synthesize_sbc
    prog = load("conjugate")
    b = synthesize_sbc(prog, 15)
    report = run_sbc(b, data_env("conjugate", prog), 120, seed=3, cfg=MhConfig(warmup=200, inner_iters=20))
    assert report.passed
    assert report.ranks["mu"].min() >= 0 and report.ranks["mu"].max() <= 15


# ------------------------------------------------------------ tables

@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_round_trip_is_exact(xs):
    t = DrawTable({"x": np.array(xs), "k": np.arange(len(xs), dtype=np.int64)})
    back = read_csv(t.to_csv())
    np.testing.assert_array_equal(back.columns["x"], t.columns["x"])
    np.testing.assert_array_equal(back.columns["k"], t.columns["k"])
    assert back.to_csv() == t.to_csv()


def test_integral_reals_stay_real():
    back = read_csv(DrawTable({"x": np.array([1.0, -0.0, 2.5])}).to_csv())
    assert back.columns["x"].dtype == float
    assert np.signbit(back.columns["x"][1])


def test_csv_vector_columns():
    t = DrawTable({"theta": np.arange(6, dtype=float).reshape(3, 2) / 7})
    text = t.to_csv()
    assert text.splitlines()[0] == "theta[1],theta[2]"
    np.testing.assert_array_equal(read_csv(text).columns["theta"], t.columns["theta"])
