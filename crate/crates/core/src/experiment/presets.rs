//! Built-in model zoo. Each preset is a complete experiment config.

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// "mixing" or "non-mixing".
    pub expected: &'static str,
    pub toml: &'static str,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        ExperimentConfig::parse(self.toml).unwrap_or_else(|e| panic!("preset {} is invalid: {e}", self.name))
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "ou-gaussian",
        description: "OU moving average e^{-s}1{s>=0} over Brownian noise",
        expected: "mixing",
        toml: r#"
name = "ou-gaussian"

[model]
type = "mma"
l = 1
basis = { dim = 1, sigma = [[1.0]] }
kernel = [{ shape = { kind = "exponential", rates = [1.0] } }]

[sequence]
type = "ray"
direction = [1.0]
start = 0.0
step = 1.0
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "smallball", "law", "codifference", "marginal-mc", "pair-empirical", "ergodic", "nnd", "integrability"]

[diagnostics.ergodic]
horizon = 100.0
replicates = 16

[simulation]
seed = 1001
replicates = 2000
h = 0.05

[output]
directory = "out/ou-gaussian"
"#,
    },
    Preset {
        name: "ou-cp",
        description: "OU moving average over compound Poisson noise with unit jumps",
        expected: "mixing",
        toml: r#"
name = "ou-cp"

[model]
type = "mma"
l = 1
basis = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }
kernel = [{ shape = { kind = "exponential", rates = [1.0] } }]

[sequence]
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "smallball", "law", "codifference", "marginal-mc", "pair-empirical", "integrability"]

[simulation]
seed = 1002
replicates = 2000
h = 0.05

[output]
directory = "out/ou-cp"
"#,
    },
    Preset {
        name: "indicator-cp",
        description: "moving sum 1{0<=s<1} of compound Poisson noise with unit jumps",
        expected: "mixing",
        toml: r#"
name = "indicator-cp"

[model]
type = "mma"
l = 1
basis = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }
kernel = [{ shape = { kind = "indicator", lower = [0.0], upper = [1.0] } }]

[sequence]
start = 0.0
step = 0.25
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "smallball", "law", "codifference", "marginal-mc", "pair-empirical", "integrability"]

[simulation]
seed = 1003
replicates = 2000
h = 0.05

[output]
directory = "out/indicator-cp"
"#,
    },
    Preset {
        name: "constant-field",
        description: "X_t = Z for all t with Z compound Poisson; stationary, non-ergodic",
        expected: "non-mixing",
        toml: r#"
name = "constant-field"

[model]
type = "constant"
l = 1
law = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }

[sequence]
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "law", "codifference", "marginal-mc", "pair-empirical", "ergodic"]

[diagnostics.ergodic]
horizon = 100.0
replicates = 64

[simulation]
seed = 1004
replicates = 2000

[output]
directory = "out/constant-field"
"#,
    },
    Preset {
        name: "sum-of-ou",
        description: "independent sum of a Gaussian OU (rate 1) and a compound Poisson OU (rate 2)",
        expected: "mixing",
        toml: r#"
name = "sum-of-ou"

[model]
type = "sum"

[[model.parts]]
type = "mma"
l = 1
basis = { dim = 1, sigma = [[1.0]] }
kernel = [{ shape = { kind = "exponential", rates = [1.0] } }]

[[model.parts]]
type = "mma"
l = 1
basis = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }
kernel = [{ shape = { kind = "exponential", rates = [2.0] } }]

[sequence]
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "law", "codifference", "marginal-mc", "pair-empirical"]

[simulation]
seed = 1005
replicates = 2000
h = 0.05

[output]
directory = "out/sum-of-ou"
"#,
    },
    Preset {
        name: "subordinated-ou",
        description: "OU moving average over Brownian noise run on a Poisson meta-time",
        expected: "mixing",
        toml: r#"
name = "subordinated-ou"

[model]
type = "subordinated"
l = 1
space = { dim = 1, sigma = [[1.0]] }
time = { dim = 1, gamma = [1.0], atoms = [{ point = [1.0], mass = 1.0 }] }
kernel = [{ shape = { kind = "exponential", rates = [1.0] } }]

[sequence]
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "law", "marginal-mc", "integrability"]

[simulation]
seed = 1006
replicates = 2000
h = 0.05

[output]
directory = "out/subordinated-ou"
"#,
    },
    Preset {
        name: "atom-2pi",
        description: "moving sum of compound Poisson noise with jumps of size 2pi",
        expected: "mixing",
        toml: r#"
name = "atom-2pi"

[model]
type = "mma"
l = 1
basis = { dim = 1, atoms = [{ point = [6.283185307179586], mass = 1.0 }] }
kernel = [{ shape = { kind = "indicator", lower = [0.0], upper = [1.0] } }]

[sequence]
step = 0.25
count = 21

[diagnostics]
run = ["combined", "pair", "rescaled", "marginal-mc"]

[simulation]
seed = 1007
replicates = 2000
h = 0.05

[output]
directory = "out/atom-2pi"
"#,
    },
    Preset {
        name: "ou2d-gaussian",
        description: "two-parameter OU sheet kernel e^{-s1-s2} over Brownian noise",
        expected: "mixing",
        toml: r#"
name = "ou2d-gaussian"

[model]
type = "mma"
l = 2
basis = { dim = 1, sigma = [[1.0]] }
kernel = [{ shape = { kind = "exponential", rates = [1.0, 1.0] } }]

[sequence]
type = "diagonal"
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "norm-free", "marginal-mc"]

[simulation]
seed = 1008
replicates = 2000
h = 0.2

[output]
directory = "out/ou2d-gaussian"
"#,
    },
    Preset {
        name: "radial-cp-2d",
        description: "radial Gaussian-shaped kernel over compound Poisson noise on the plane",
        expected: "mixing",
        toml: r#"
name = "radial-cp-2d"

[model]
type = "mma"
l = 2
basis = { dim = 1, atoms = [{ point = [1.0], mass = 1.0 }] }
kernel = [{ shape = { kind = "gaussian", precision = 1.0 } }]

[sequence]
type = "spiral"
step = 0.75
count = 21

[diagnostics]
run = ["combined", "pair", "smallball", "norm-free", "marginal-mc"]

[simulation]
seed = 1009
replicates = 2000
h = 0.25

[output]
directory = "out/radial-cp-2d"
"#,
    },
    Preset {
        name: "supou-gaussian",
        description: "superposition of Gaussian OU kernels with rates 0.5 and 2",
        expected: "mixing",
        toml: r#"
name = "supou-gaussian"

[model]
type = "mma"
l = 1
weights = [0.5, 0.5]
basis = { dim = 1, sigma = [[1.0]] }
kernel = [
    { class = 0, shape = { kind = "exponential", rates = [0.5] } },
    { class = 1, shape = { kind = "exponential", rates = [2.0] } },
]

[sequence]
step = 2.0
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "law", "codifference", "marginal-mc", "integrability"]

[simulation]
seed = 1010
replicates = 2000
h = 0.05

[output]
directory = "out/supou-gaussian"
"#,
    },
    Preset {
        name: "slab-gaussian",
        description: "one-sided exponential slab kernel of half-width 1 over Brownian noise on the plane",
        expected: "mixing",
        toml: r#"
name = "slab-gaussian"

[model]
type = "mma"
l = 2
basis = { dim = 1, sigma = [[1.0]] }
kernel = [{ shape = { kind = "slab", rate = 1.0, half_width = 1.0 } }]

[sequence]
type = "diagonal"
step = 1.5
count = 21

[diagnostics]
run = ["combined", "pair", "maruyama", "norm-free", "marginal-mc"]

[simulation]
seed = 1011
replicates = 2000
h = 0.2

[output]
directory = "out/slab-gaussian"
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn config(name: &str) -> Option<ExperimentConfig> {
    find(name).map(|p| p.config())
}
