"""Structural estimation of retail inventory management on synthetic panels.

Pipeline: demand forecasting (:mod:`invdp.demand_estimation`), reduced-form
(S, s) rules (:mod:`invdp.reduced_form_ss`), the dynamic programme
(:mod:`invdp.dp_solver`), two-step pseudo-likelihood estimation of perceived
costs (:mod:`invdp.structural_estimation`) and policy experiments
(:mod:`invdp.counterfactual`), with a forward simulator
(:mod:`invdp.simulator`) and the ``invdp`` command line (:mod:`invdp.cli`).
"""

__version__ = "0.1.0"
