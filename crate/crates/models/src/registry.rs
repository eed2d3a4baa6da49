//! Architecture registry: each model kind lives behind the [`Architecture`]
//! trait and is selected by name at runtime.

use crate::config::{ModelConfig, ModelKind};
use crate::{ddl::Ddl, edelta::Edelta, gpt::Gpt, jpmhc::Jpmhc, mhc::Mhc};
use nn::tape::{Tape, VarId};
use nn::{ParamBinding, ParamSpec};

/// One forward pass: predictions plus the gate values collected per
/// geometric-operator site (empty for kinds without a gate).
pub struct ForwardOutput {
    pub output: VarId,
    /// One (B,) node per gate site, in block order.
    pub gammas: Vec<VarId>,
}

pub trait Architecture: Sync {
    fn kind(&self) -> ModelKind;

    /// Declared parameter tensors in initialization order. This is the
    /// single source of truth for both `count_params` and init.
    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec>;

    /// Build the forward graph from embedded input to task-space output.
    fn forward(
        &self,
        cfg: &ModelConfig,
        tape: &mut Tape,
        params: &ParamBinding,
        input: VarId,
    ) -> ForwardOutput;
}

static ARCHITECTURES: [&dyn Architecture; 5] = [&Gpt, &Ddl, &Mhc, &Jpmhc, &Edelta];

pub fn registry() -> &'static [&'static dyn Architecture] {
    &ARCHITECTURES
}

pub fn lookup(kind: ModelKind) -> &'static dyn Architecture {
    *ARCHITECTURES
        .iter()
        .find(|a| a.kind() == kind)
        .expect("every kind is registered")
}

pub fn lookup_name(name: &str) -> Option<&'static dyn Architecture> {
    ModelKind::parse(name).map(lookup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_is_registered_once() {
        for kind in ModelKind::ALL {
            assert_eq!(lookup(kind).kind(), kind);
        }
        assert_eq!(registry().len(), ModelKind::ALL.len());
    }

    #[test]
    fn lookup_by_name() {
        assert!(lookup_name("edelta").is_some());
        assert!(lookup_name("resnet").is_none());
    }
}
