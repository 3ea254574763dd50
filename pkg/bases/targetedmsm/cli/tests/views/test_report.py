import math
import os.path
import unittest

from targetedmsm.cli.views.report import ResultReport, render, terms

GOLDEN = os.path.join(os.path.dirname(os.path.dirname(__file__)), "golden", "report.json")


def _report(**changes) -> ResultReport:
    report = ResultReport(
        command="estimate",
        n=100,
        family="binary",
        model="linear",
        terms=["(intercept)", "X4"],
        beta_star=[0.25, 0.125],
        se=[0.5, 0.0625],
        ci=[[-0.75, 1.25], [0, 0.25]],
        level=0.95,
        eif_mean_norm=0.001,
        iterations=3,
        converged=True,
    )
    return report.set(**changes) if changes else report


class TestReport(unittest.TestCase):

    def test_rendering_matches_the_stored_report(self):
        with open(GOLDEN, encoding="utf-8") as f:
            golden = f.read().rstrip("\n")

        self.assertEqual(golden, render(_report()))

    def test_non_finite_numbers_are_refused(self):
        with self.assertRaises(AssertionError) as raised:
            render(_report(beta_star=[math.nan, 0.0]))

        self.assertIn("beta_star[0]", str(raised.exception))

    def test_terms_follow_the_modifiers(self):
        self.assertEqual(["(intercept)", "X4", "X2"], terms(["X4", "X2"], 3))
        self.assertEqual(["(intercept)"], terms(["X4"], 1))
