//! Experiments shipped with the binary.

pub struct Builtin {
    pub name: &'static str,
    pub source: &'static str,
}

pub const BUILTINS: &[Builtin] = &[
    Builtin { name: "example1-case1", source: include_str!("../builtins/example1-case1.toml") },
    Builtin { name: "example1-case2", source: include_str!("../builtins/example1-case2.toml") },
    Builtin { name: "example1-case2-literal", source: include_str!("../builtins/example1-case2-literal.toml") },
    Builtin { name: "example2-alg1-sigma0.005", source: include_str!("../builtins/example2-alg1-sigma0.005.toml") },
    Builtin { name: "example2-alg2-sigma0.005", source: include_str!("../builtins/example2-alg2-sigma0.005.toml") },
    Builtin { name: "example2-alg1-sigma0.1", source: include_str!("../builtins/example2-alg1-sigma0.1.toml") },
    Builtin { name: "example2-alg2-sigma0.1", source: include_str!("../builtins/example2-alg2-sigma0.1.toml") },
];

/// Short names that resolve to a full builtin.
pub const ALIASES: &[(&str, &str)] = &[("example1", "example1-case1"), ("example2", "example2-alg1-sigma0.005")];

pub fn find(name: &str) -> Option<&'static Builtin> {
    let name = ALIASES.iter().find(|(a, _)| *a == name).map_or(name, |(_, full)| full);
    BUILTINS.iter().find(|b| b.name == name)
}
