# Low-resolution outputs.  Each real and imaginary part of z + w is mapped
# to one of 2^B cells; EP runs in diagonal mode and treats the cell as an
# interval observation.  Least squares just uses the cell midpoints.

# %%
from rowamp.harness import parse_config, run_experiment

cfg = parse_config(
    {
        "system": {"L": 256, "N": 64, "M": 2},
        "prior": {"type": "bernoulli-gaussian", "rho": 0.1},
        "channel": {"type": "quantized", "bits": 1, "snr_db": 10},
        "estimators": ["ep", "ls"],
        "sweep": {"bits": [1, 2, 3, 8]},
        "trials": 5,
    }
)
terminal = {}
for r in run_experiment(cfg, write=False):
    terminal[(r.axes["bits"], r.estimator)] = r

for b in (1, 2, 3, 8):
    ep, ls = terminal[(b, "ep")], terminal[(b, "ls")]
    print(f"B={b}:  EP {ep.nmse_db:7.2f} dB ({ep.extra['solver_mode']})   LS {ls.nmse_db:7.2f} dB")
