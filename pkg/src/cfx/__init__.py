"""cfx: provably nearest counterfactual explanations for ReLU classifiers."""

__version__ = "0.1.0"
