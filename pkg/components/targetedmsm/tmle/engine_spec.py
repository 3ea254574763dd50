import numpy as np

from expects import be, be_below, be_true, equal, expect
from mamba import context, description, it
from scipy.special import expit, logit

from targetedmsm.autodiff.dual import grad
from targetedmsm.msm.core import EifRows, delta_star
from targetedmsm.msm.data import Family, make_dataset
from targetedmsm.msm.models import intercept_only, linear_squared_error
from targetedmsm.nuisance.fit import NuisanceFit, make_nuisance
from targetedmsm.sim.dgp import generate_dataset, oracle_nuisance, true_beta_oracle
from targetedmsm.tmle.engine import (
    FluctuationState,
    TargetedFit,
    anchor,
    arm_covariates,
    clever_covariates,
    eps_risk,
    eps_step,
    fluctuate_qbar,
    initial_state,
    target,
    tilt_weights,
    wald_ci,
)
from targetedmsm.util.errors import NonConvergenceError

ALL = [0, 1, 2, 3]


def gap(a, b):
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def state_of(q0, q1, w=None):
    n = len(q0)
    return FluctuationState(
        qbar0=np.asarray(q0, dtype=float),
        qbar1=np.asarray(q1, dtype=float),
        tilt_logw=np.zeros(n),
        w=np.full(n, 1 / n) if w is None else np.asarray(w, dtype=float),
        beta=np.zeros(1),
    )


def fit_with(cov, n):
    p = cov.shape[0]
    zeros = np.zeros((n, p))
    return TargetedFit(
        beta_star=np.array([0.5] * p),
        eif=EifRows(D=zeros, D1=zeros, D2=zeros, M=np.eye(p)),
        cov=cov,
        ci=np.zeros((p, 2)),
        eif_mean_norm=0.0,
        state=state_of(np.zeros(n), np.zeros(n)),
    )


def classical_ate(data, nuisance, rounds=20):
    """one-step logistic fluctuation with H = A/g - (1 - A)/(1 - g)"""
    g = nuisance.g1
    h = data.A / g - (1 - data.A) / (1 - g)
    h1, h0 = 1 / g, -1 / (1 - g)
    qa = np.where(data.A == 1, nuisance.qbar1, nuisance.qbar0)

    eps = 0.0
    for _ in range(rounds):
        mu = expit(logit(qa) + eps * h)
        eps += float(h @ (data.Y - mu)) / float((h * h) @ (mu * (1 - mu)))

    return float(np.mean(expit(logit(nuisance.qbar1) + eps * h1) - expit(logit(nuisance.qbar0) + eps * h0)))


def classical_eif(data, g, q0, q1, beta):
    """H (Y - Q_A) + Q1 - Q0 - β with H = A/g - (1 - A)/(1 - g)"""
    h = data.A / g - (1 - data.A) / (1 - g)
    qa = np.where(data.A == 1, q1, q0)
    return h * (data.Y - qa) + q1 - q0 - beta


with description("targeting engine") as self:
    with context("clever_covariates:"):
        with it("zeroes h0 for a treated row"):
            expect(clever_covariates(1, 0.5)).to(equal((0.0, 2.0)))

        with it("zeroes h1 for an untreated row"):
            expect(clever_covariates(0, 0.5)).to(equal((-2.0, 0.0)))

        with it("uses the complement of the propensity for h0"):
            h0, h1 = clever_covariates(0, 0.8)

            expect(abs(h0 + 5.0)).to(be_below(1e-12))
            expect(h1).to(equal(0.0))

    with context("arm_covariates:"):
        with it("gives both arms on every row"):
            h0, h1 = arm_covariates(np.array([0.5, 0.8]))

            expect(gap(h0, [-2.0, -5.0])).to(be_below(1e-12))
            expect(gap(h1, [2.0, 1.25])).to(be_below(1e-12))

        with it("agrees with the observed form on the observed arm"):
            a = np.array([1.0, 0.0, 0.0, 1.0])
            g1 = np.array([0.3, 0.6, 0.5, 0.9])
            h0, h1 = arm_covariates(g1)
            o0, o1 = clever_covariates(a, g1)

            expect(gap(np.where(a == 1, h1, h0), o0 + o1)).to(be_below(1e-15))

    with context("fluctuate_qbar:"):
        with it("is an exact identity at zero"):
            q0 = np.array([0.2, 0.7, 0.4])
            q1 = np.array([0.9, 0.35, 0.6])
            h0, h1 = clever_covariates(np.array([1, 0, 1]), np.array([0.3, 0.6, 0.5]))

            a, b = fluctuate_qbar(state_of(q0, q1), [0.0, 0.0], np.ones((3, 2)), Family.binary, h0, h1)

            expect(np.array_equal(a, q0) and np.array_equal(b, q1)).to(be_true)

        with it("leaves the untreated regression alone on a treated row"):
            h0, h1 = clever_covariates(np.array([1.0]), np.array([0.4]))

            a, _ = fluctuate_qbar(state_of([0.3], [0.6]), [0.7, -2.0], np.array([[1.0, 0.5]]), Family.binary, h0, h1)

            expect(np.array_equal(a, [0.3])).to(be_true)

        with it("moves on the logit scale"):
            _, b = fluctuate_qbar(state_of([0.5], [0.5]), [0.1], np.array([[1.0]]), Family.binary, np.array([0.0]), np.array([2.0]))

            expect(abs(float(b[0]) - float(expit(0.2)))).to(be_below(1e-15))

        with it("moves on the identity scale with an arm variance"):
            _, b = fluctuate_qbar(
                state_of([1.0], [2.0]), [0.1], np.array([[1.0]]), Family.continuous, np.array([0.0]), np.array([2.0]), scale1=3.0
            )

            expect(abs(float(b[0]) - 2.6)).to(be_below(1e-15))

    with context("tilt_weights:"):
        with it("keeps the weights at zero"):
            w = np.array([0.2, 0.3, 0.5])

            expect(tilt_weights(w, [0.0], np.ones((3, 1)))).to(be(w))

        with it("cancels a constant tilt"):
            w = np.array([0.2, 0.3, 0.5])

            expect(gap(tilt_weights(w, [1.7], np.full((3, 1), 0.4)), w)).to(be_below(1e-15))

        with it("tilts two rows by exp(±ln 2)"):
            w = tilt_weights(np.array([0.5, 0.5]), [np.log(2.0)], np.array([[1.0], [-1.0]]))

            expect(gap(w, [0.8, 0.2])).to(be_below(1e-15))

    with context("eps_step:"):
        with it("has the negative mean of D1 + D2 as its risk gradient at zero"):
            for seed in range(5):
                data = generate_dataset(200, seed)
                spec = linear_squared_error(1)
                nuisance = make_nuisance(data, ALL, [0, 3])
                state = initial_state(nuisance, spec.p)
                at = anchor(state, spec, data.V)

                _, g = grad(eps_risk(state, at, data, nuisance, Family.binary), np.zeros(2))

                q_a = np.where(data.A == 1, state.qbar1, state.qbar0)
                d1 = at.gtl * delta_star(data.A, data.Y, q_a, nuisance.g1)[:, None]
                expect(gap(g, -(d1 + at.ldot).mean(axis=0))).to(be_below(1e-10))

        with it("agrees with a grid search of the fluctuation risk"):
            data = generate_dataset(50, 21)
            spec = linear_squared_error(1)
            nuisance = make_nuisance(data, ALL, ALL)
            state = initial_state(nuisance, spec.p)
            at = anchor(state, spec, data.V)

            eps = eps_step(state, at, data, nuisance, Family.binary)

            risk = eps_risk(state, at, data, nuisance, Family.binary)
            grid0 = np.arange(eps[0] - 0.05, eps[0] + 0.05, 1e-3)
            grid1 = np.arange(eps[1] - 0.05, eps[1] + 0.05, 1e-3)
            values = np.array([[risk([a, b]) for b in grid1] for a in grid0])
            i, j = np.unravel_index(np.argmin(values), values.shape)
            expect(gap(eps, [grid0[i], grid1[j]])).to(be_below(2e-3))

        with it("stays at zero without residuals"):
            rng = np.random.default_rng(3)
            X = rng.normal(size=(30, 2))
            A = (rng.uniform(size=30) < 0.5).astype(float)
            q0 = X[:, 0]
            q1 = q0 + 0.4 - 0.3 * X[:, 1]
            data = make_dataset(X, A, np.where(A == 1, q1, q0), v_cols=[1], family=Family.continuous)
            nuisance = NuisanceFit(qbar0=q0, qbar1=q1, g1=np.full(30, 0.5), sigma2_0=1.0, sigma2_1=1.0)
            state = initial_state(nuisance, 2)

            eps = eps_step(state, anchor(state, linear_squared_error(1), data.V), data, nuisance, Family.continuous)

            expect(gap(eps, [0.0, 0.0])).to(be_below(1e-12))

    with context("target:"):
        with it("solves the influence function equation"):
            for seed in range(3):
                data = generate_dataset(1000, seed)

                fit = target(data, linear_squared_error(1), make_nuisance(data, ALL, ALL))

                expect(fit.eif_mean_norm).to(be_below(1e-6))
                expect(fit.converged).to(be_true)

        with it("solves it under misspecified nuisance models too"):
            data = generate_dataset(500, 77)

            fit = target(data, linear_squared_error(1), make_nuisance(data, [0, 3], [0, 3]))

            expect(fit.eif_mean_norm).to(be_below(1e-6))

        with it("is idempotent"):
            data = generate_dataset(400, 8)
            spec = linear_squared_error(1)
            nuisance = make_nuisance(data, ALL, ALL)

            first = target(data, spec, nuisance)
            second = target(data, spec, nuisance, start=first.state)

            expect(second.iterations).to(equal(1))
            expect(float(np.max(np.abs(second.state.eps_history[-1])))).to(be_below(1e-4 / np.sqrt(400)))

        with it("recovers the projection under the true nuisance"):
            data = generate_dataset(100_000, 1)
            beta0, _ = true_beta_oracle(draws=2_000_000)

            fit = target(data, linear_squared_error(1), oracle_nuisance(data))

            se = np.sqrt(np.diag(fit.cov) / fit.n)
            expect(bool(np.all(np.abs(fit.beta_star - beta0) < 3 * se))).to(be_true)

        with it("reduces to the average treatment effect without modifiers"):
            raw = generate_dataset(600, 12)
            data = make_dataset(raw.X, raw.A, raw.Y, v_cols=[])
            nuisance = make_nuisance(data, ALL, ALL)

            fit = target(data, intercept_only(), nuisance)

            psi = fit.state.qbar1 - fit.state.qbar0
            expect(abs(float(fit.beta_star[0]) - float(fit.state.w @ psi))).to(be_below(1e-12))
            expect(fit.eif_mean_norm).to(be_below(1e-6))

        with it("moves the unobserved arm of every row"):
            data = generate_dataset(400, 31)
            nuisance = make_nuisance(data, ALL, [0, 3])

            fit = target(data, linear_squared_error(1), nuisance)

            treated = data.A == 1
            expect(bool(np.all(fit.state.qbar0[treated] != nuisance.qbar0[treated]))).to(be_true)
            expect(bool(np.all(fit.state.qbar1[~treated] != nuisance.qbar1[~treated]))).to(be_true)

        with it("solves the classical average effect equation without modifiers"):
            for seed in range(20):
                raw = generate_dataset(500, 100 + seed)
                data = make_dataset(raw.X, raw.A, raw.Y, v_cols=[])
                nuisance = make_nuisance(data, ALL, [0, 3])

                fit = target(data, intercept_only(), nuisance, stop_tol=1e-12)

                beta = float(fit.beta_star[0])
                q0, q1 = fit.state.qbar0, fit.state.qbar1
                eif = classical_eif(data, nuisance.g1, q0, q1, beta)
                expect(gap(fit.eif.D[:, 0], eif)).to(be_below(1e-8))
                expect(abs(beta - float(np.mean(eif + beta)))).to(be_below(1e-8))

        with it("agrees with a classical average effect fluctuation"):
            for seed in (21, 22, 23):
                raw = generate_dataset(1000, seed)
                data = make_dataset(raw.X, raw.A, raw.Y, v_cols=[])
                nuisance = make_nuisance(data, ALL, ALL)

                fit = target(data, intercept_only(), nuisance)

                # the weights tilt too, so the two differ at order 1/n
                expect(abs(float(fit.beta_star[0]) - classical_ate(data, nuisance))).to(be_below(1e-2))

        with it("targets a continuous outcome"):
            rng = np.random.default_rng(5)
            n = 800
            X = rng.normal(size=(n, 2))
            A = (rng.uniform(size=n) < expit(0.4 * X[:, 0])).astype(float)
            Y = X[:, 0] + A * (1.0 + 0.5 * X[:, 1]) + rng.normal(size=n)
            data = make_dataset(X, A, Y, v_cols=[1], family=Family.continuous)

            fit = target(data, linear_squared_error(1), make_nuisance(data, [0, 1], [0, 1]))

            expect(fit.eif_mean_norm).to(be_below(1e-6))
            expect(gap(fit.beta_star, [1.0, 0.5])).to(be_below(0.3))

        with it("reports the fit when it runs out of iterations"):
            data = generate_dataset(300, 2)

            try:
                target(data, linear_squared_error(1), make_nuisance(data, ALL, ALL), stop_tol=0.0, max_iter=2)
                raised = None
            except NonConvergenceError as e:
                raised = e

            expect(raised.fit.iterations).to(equal(2))
            expect(raised.detail["eif_mean_norm"]).to(equal(raised.fit.eif_mean_norm))

    with context("wald_ci:"):
        with it("collapses to the estimate without variance"):
            ci = wald_ci(fit_with(np.zeros((2, 2)), 10))

            expect(ci.tolist()).to(equal([[0.5, 0.5], [0.5, 0.5]]))

        with it("uses the normal quantile"):
            ci = wald_ci(fit_with(np.diag([1.0, 4.0]), 100))

            half = (ci[:, 1] - ci[:, 0]) / 2
            expect(gap(half, [0.196, 0.392])).to(be_below(1e-3))
