"""Train one global model on a panel of short series, then produce point
and sampled forecasts for the held-out horizon and score them.

A reduced setup (D = 200, 5 epochs) so it finishes in a couple of minutes.

Run: python3 demos/panel_forecasting.py
"""

import numpy as np

from binconv.data import SplitSpec, synth_panel
from binconv.experiments import evaluate, naive_last_value_nmae, training_pairs
from binconv.model import BinConvConfig, build_variant
from binconv.training import TrainConfig, fit

records = synth_panel(n_series=20, length=100, seed=1)
split = SplitSpec(horizon=14)  # context defaults to 3 * horizon
model = build_variant("standard", BinConvConfig(split.context_length, D=200), seed=0)
print(f"{model.num_parameters()} parameters")

pairs = training_pairs(records, split)
hist = fit(model, pairs, TrainConfig(epochs=5, seed=0))
print(f"{len(pairs)} training pairs, losses {np.round(hist.losses, 4).tolist()}")

point = evaluate(model, records, split, "argmax")
sampled = evaluate(model, records, split, "sampling", n_samples=100, seed=0)
print(f"argmax   NMAE {point['nmae']:.4f}")
print(f"sampling NMAE {sampled['nmae']:.4f}  CRPS {sampled['crps']:.4f}")
print(f"naive    NMAE {naive_last_value_nmae(records, split):.4f}")

q = sampled["quantiles"][0]
print(f"\nseries {sampled['series_ids'][0]}: 90% band per step")
for h in range(0, split.horizon, 3):
    print(f"  step {h + 1:2d}: [{q[0, h]:8.2f}, {q[-1, h]:8.2f}]  actual {sampled['actuals'][0, h]:8.2f}")
