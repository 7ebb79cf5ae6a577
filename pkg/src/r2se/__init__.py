"""Desk-scale hard-case refinement for a categorical trajectory planner:
generated driving scenarios, a pretrained generalist, LoRA adapter-ensemble
specialists refined on hard cases, and an uncertainty-tail gate between them."""

__version__ = "0.1.0"
