//! Built-in `bench` recipes. Only `desk16` is sized for a laptop; the others are long runs
//! whose published accuracies are carried along as targets.

pub struct Preset {
    pub name: &'static str,
    pub target: &'static str,
    pub toml: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "desk16",
        target: "relative error <= 1e-3 against sector ED at D = 4",
        toml: r#"
[model]
kind = "chain"
dims = [16]
block = [4]
g = 0.2

[sector]
two_sz = 0
k = 0
p = 1
z = 1

[ansatz]
chi = 11
bond_dims = [2, 3, 4]
seed = 1

[optimizer]
exact_sum = true
learning_rate = 0.01
max_iterations = 1000
convergence_window = 200
convergence_tolerance = 1e-9
"#,
    },
    Preset {
        name: "chain64-singlet",
        target: "relative error about 2e-3 at b = 4; E/N extrapolated in 1/D to about 1e-5",
        toml: r#"
[model]
kind = "chain"
dims = [64]
block = [4]
g = 0.2

[sector]
two_sz = 0
k = 0
p = 1
z = 1

[ansatz]
chi = 11
bond_dims = [2, 3, 4, 5, 6]
seed = 1

[isometry]
reference_dims = [16]

[optimizer]
n_samples = 4096
max_samples = 65536
max_iterations = 3000
"#,
    },
    Preset {
        name: "chain64-triplet",
        target: "relative error about 4e-3 at b = 4; E/N extrapolated in 1/D to about 1e-4",
        toml: r#"
[model]
kind = "chain"
dims = [64]
block = [4]
g = 0.25

[sector]
two_sz = 0
k = "pi"
p = -1
z = -1

[ansatz]
chi = 16
bond_dims = [2, 3, 4, 5, 6]
seed = 1

[isometry]
reference_dims = [16]

[optimizer]
n_samples = 4096
max_samples = 65536
max_iterations = 3000
"#,
    },
    Preset {
        name: "torus6x6",
        target: "E/N extrapolated in 1/D (D = 2, 4, 6) to about 1e-5",
        toml: r#"
[model]
kind = "torus"
dims = [6, 6]
block = [2, 2]
g = 0.5

[sector]
two_sz = 0
kx = 0
ky = 0
px = 1
py = 1
d1 = 1
d2 = 1
z = 1

[ansatz]
chi = 16
bond_dims = [2, 4, 6]
seed = 1

[isometry]
reference_dims = [4, 4]

[optimizer]
n_samples = 4096
max_samples = 65536
max_iterations = 3000
"#,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn every_preset_parses() {
        for p in PRESETS {
            let cfg = RunConfig::from_toml(p.toml).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert!(!cfg.ansatz.bond_dims.is_empty());
        }
    }
}
