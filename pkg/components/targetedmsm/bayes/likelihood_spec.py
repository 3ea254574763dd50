import numpy as np

from expects import be_above, be_below, be_true, equal, expect, raise_error
from mamba import before, context, description, it
from scipy.special import expit, logit
from scipy.stats import multivariate_normal

from targetedmsm.autodiff.dual import grad
from targetedmsm.bayes.likelihood import (
    FlatPrior,
    GaussianPrior,
    TargetedPosterior,
    fluctuated,
    log_prior_eps,
    log_targeted_likelihood,
    targeted_likelihood,
    theta_jacobian,
    vartheta,
)
from targetedmsm.msm.core import assemble_eif, delta_star, eif_covariance, solve_beta
from targetedmsm.msm.data import Family, make_dataset
from targetedmsm.msm.models import linear_squared_error
from targetedmsm.nuisance.fit import make_nuisance
from targetedmsm.sim.dgp import generate_dataset
from targetedmsm.tmle.engine import FluctuationState, TargetedFit, initial_state, target
from targetedmsm.util.errors import DegenerateMapError

ALL = [0, 1, 2, 3]


def relative(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def fd_jacobian(lik, eps, h=1e-5):
    eps = np.asarray(eps, dtype=float)
    cols = []
    for k in range(eps.shape[0]):
        e = np.zeros_like(eps)
        e[k] = h
        cols.append((vartheta(lik, eps + e) - vartheta(lik, eps - e)) / (2 * h))
    return np.column_stack(cols)


def simulated(n, seed, cols=ALL):
    data = generate_dataset(n, seed)
    spec = linear_squared_error(1)
    nuisance = make_nuisance(data, cols, cols)
    fit = target(data, spec, nuisance)
    return data, fit, targeted_likelihood(fit, data, spec, nuisance)


def untargeted(data, spec, nuisance):
    """a fit anchored at the initial regressions, where the influence rows do not average to zero"""
    state = initial_state(nuisance, spec.p)
    psi = state.qbar1 - state.qbar0
    beta = solve_beta(psi, state.w, spec, data.V)
    q_a = np.where(data.A == 1, state.qbar1, state.qbar0)
    eif = assemble_eif(psi, state.w, beta, spec, data.V, delta_star(data.A, data.Y, q_a, nuisance.g1))
    return TargetedFit(
        beta_star=beta,
        eif=eif,
        cov=eif_covariance(eif),
        ci=np.zeros((spec.p, 2)),
        eif_mean_norm=float(np.max(np.abs(eif.D.mean(axis=0)))),
        state=state.set(beta=beta),
    )


def one_row():
    _, _, lik = simulated(40, 0, cols=[3])
    state = FluctuationState(
        qbar0=np.array([0.3]), qbar1=np.array([0.6]), tilt_logw=np.zeros(1), w=np.array([1.0]), beta=np.zeros(1)
    )
    return lik.set(
        base=state,
        beta_star=np.zeros(1),
        A=np.array([1.0]),
        Y=np.array([1.0]),
        V=np.zeros((1, 1)),
        h0=np.array([0.0]),
        h1=np.array([2.0]),
        M=np.eye(1),
        fluct_dirs=np.array([[0.5]]),
        tilt_dirs=np.array([[0.25]]),
    )


with description("targeted likelihood") as self:
    with before.all:
        self.data, self.fit, self.lik = simulated(300, 4)

    with context("log_targeted_likelihood:"):
        with it("is the likelihood of the targeted state at zero"):
            lik = self.lik
            q_a = np.where(lik.A == 1, lik.base.qbar1, lik.base.qbar0)
            expected = float(np.sum(lik.Y * np.log(q_a) + (1 - lik.Y) * np.log(1 - q_a)) + np.sum(np.log(lik.base.w)))

            value = float(log_targeted_likelihood(lik, np.zeros(2)))

            expect(abs(value - expected)).to(be_below(1e-9 * abs(expected)))

        with it("matches a hand computed single row"):
            value = float(log_targeted_likelihood(one_row(), [0.2]))

            # one row: the tilt cancels against its own normalizer
            expect(abs(value - float(np.log(expit(logit(0.6) + 0.2))))).to(be_below(1e-12))

        with it("has the summed influence function as its score at zero"):
            _, g = grad(lambda e: log_targeted_likelihood(self.lik, e), np.zeros(2))

            expect(float(np.max(np.abs(g - self.fit.eif.D.sum(axis=0))))).to(be_below(1e-6))

        with it("keeps that score away from the targeted state"):
            data = generate_dataset(300, 4)
            spec = linear_squared_error(1)
            nuisance = make_nuisance(data, [0, 3], [0, 3])
            fit = untargeted(data, spec, nuisance)
            lik = targeted_likelihood(fit, data, spec, nuisance)

            _, g = grad(lambda e: log_targeted_likelihood(lik, e), np.zeros(2))

            expected = fit.eif.D.sum(axis=0)
            expect(float(np.max(np.abs(expected)))).to(be_above(1e-2))
            expect(relative(g, expected)).to(be_below(1e-8))

        with it("is -inf outside the box"):
            expect(log_targeted_likelihood(self.lik, [10.5, 0.0])).to(equal(-np.inf))

        with it("uses the arm variances for a continuous outcome"):
            rng = np.random.default_rng(2)
            n = 300
            X = rng.normal(size=(n, 2))
            A = (rng.uniform(size=n) < expit(0.3 * X[:, 0])).astype(float)
            Y = X[:, 0] + A * (1.0 + 0.5 * X[:, 1]) + rng.normal(size=n)
            data = make_dataset(X, A, Y, v_cols=[1], family=Family.continuous)
            spec = linear_squared_error(1)
            nuisance = make_nuisance(data, [0, 1], [0, 1])
            fit = target(data, spec, nuisance)
            lik = targeted_likelihood(fit, data, spec, nuisance)

            _, g = grad(lambda e: log_targeted_likelihood(lik, e), np.zeros(2))

            expect(float(np.max(np.abs(g - fit.eif.D.sum(axis=0))))).to(be_below(1e-6))

    with context("vartheta:"):
        with it("returns the targeted estimate at zero"):
            expect(np.array_equal(vartheta(self.lik, np.zeros(2)), self.fit.beta_star)).to(be_true)

        with it("is linear to first order"):
            J = theta_jacobian(self.lik, np.zeros(2))
            eps = np.array([6e-4, 8e-4])

            moved = vartheta(self.lik, eps) - self.fit.beta_star

            expect(relative(moved, J @ eps)).to(be_below(1e-2))

        with it("has an invertible jacobian at zero"):
            expect(abs(float(np.linalg.det(theta_jacobian(self.lik, np.zeros(2)))))).to(be_above(1e-8))

        with it("moves both regressions on every row"):
            q0, q1 = fluctuated(self.lik, [0.05, 0.05])

            expect(bool(np.all(q0 != self.lik.base.qbar0))).to(be_true)
            expect(bool(np.all(q1 != self.lik.base.qbar1))).to(be_true)

        with it("has the influence covariance as its jacobian at zero"):
            data, fit, lik = simulated(2000, 9)

            ratio = np.diag(theta_jacobian(lik, np.zeros(2))) / np.diag(fit.cov)

            expect(bool(np.all((ratio > 0.75) & (ratio < 1.33)))).to(be_true)

    with context("theta_jacobian:"):
        with it("agrees with central differences"):
            for eps in ([0.0, 0.0], [0.05, -0.03], [-0.2, 0.1]):
                expect(relative(theta_jacobian(self.lik, eps), fd_jacobian(self.lik, eps))).to(be_below(1e-3))

        with it("agrees with central differences on twenty rows"):
            _, _, lik = simulated(20, 6, cols=[3])

            expect(relative(theta_jacobian(lik, np.zeros(2)), fd_jacobian(lik, np.zeros(2)))).to(be_below(1e-5))

    with context("log_prior_eps:"):
        with it("is the log jacobian under a flat prior"):
            for eps in ([0.0, 0.0], [0.1, 0.2]):
                jac = float(np.log(abs(np.linalg.det(theta_jacobian(self.lik, eps)))))

                expect(abs(log_prior_eps(self.lik, FlatPrior(), eps) - jac)).to(be_below(1e-10))

        with it("composes the prior with the map at zero"):
            expected = float(multivariate_normal(mean=np.zeros(2)).logpdf(self.fit.beta_star)) + float(
                np.log(abs(np.linalg.det(theta_jacobian(self.lik, np.zeros(2)))))
            )

            value = log_prior_eps(self.lik, GaussianPrior.standard(2), np.zeros(2))

            expect(abs(value - expected)).to(be_below(1e-10))

        with it("rejects a map that does not move"):
            frozen = self.lik.set(fluct_dirs=np.zeros((300, 2)), tilt_dirs=np.zeros((300, 2)))

            def fn():
                log_prior_eps(frozen, FlatPrior(), np.zeros(2))

            expect(fn).to(raise_error(DegenerateMapError))

    with context("TargetedPosterior:"):
        with it("pairs the log posterior with the estimate"):
            posterior = TargetedPosterior(lik=self.lik, prior=GaussianPrior.standard(2))

            logp, beta = posterior.evaluate(np.zeros(2))

            expect(bool(np.isfinite(logp))).to(be_true)
            expect(np.array_equal(beta, self.fit.beta_star)).to(be_true)

        with it("has no density outside the box"):
            posterior = TargetedPosterior(lik=self.lik, prior=FlatPrior())

            expect(posterior.evaluate(np.array([0.0, -12.0]))).to(equal((-np.inf, None)))
