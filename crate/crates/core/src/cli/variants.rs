use crate::autodiff::Activation;
use crate::error::{GleeError, Result};
use crate::heads::{HeadSpec, LnMode};

/// A named row of the experiment matrix: a head spec plus training and
/// calibration tweaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub name: &'static str,
    pub spec: HeadSpec,
    /// Train with focal loss instead of the configured loss.
    pub focal: bool,
    /// Apply η-norm (with `calibrate.tau`) after training.
    pub eta_norm: bool,
}

const fn plain(name: &'static str, spec: HeadSpec) -> Variant {
    Variant {
        name,
        spec,
        focal: false,
        eta_norm: false,
    }
}

const fn cls(activation: Activation, ln_mode: LnMode) -> HeadSpec {
    HeadSpec {
        scheme: crate::heads::Scheme::Cls,
        activation,
        ln_mode,
        tied: false,
        input_repr: crate::heads::InputRepr::Cls,
        freeze_ln: false,
    }
}

const fn mlm(tied: bool) -> HeadSpec {
    HeadSpec {
        scheme: crate::heads::Scheme::Mlm,
        activation: Activation::Gelu,
        ln_mode: LnMode::Pretrained,
        tied,
        input_repr: crate::heads::InputRepr::Mask,
        freeze_ln: false,
    }
}

const HYBRID_RELU: HeadSpec = HeadSpec {
    scheme: crate::heads::Scheme::Hybrid,
    input_repr: crate::heads::InputRepr::Mask,
    ..cls(Activation::Relu, LnMode::None)
};

pub const ALL: [Variant; 10] = [
    plain("cls_tanh", cls(Activation::Tanh, LnMode::None)),
    Variant {
        focal: true,
        ..plain("cls_tanh_focal", cls(Activation::Tanh, LnMode::None))
    },
    Variant {
        eta_norm: true,
        ..plain("cls_tanh_eta", cls(Activation::Tanh, LnMode::None))
    },
    plain("cls_relu", cls(Activation::Relu, LnMode::None)),
    plain("cls_relu_ln", cls(Activation::Relu, LnMode::Fresh)),
    plain("cls_relu_ptln", cls(Activation::Relu, LnMode::Pretrained)),
    plain("cls_relu_prompt", HYBRID_RELU),
    plain("mlm", mlm(true)),
    plain("mlm_ed", mlm(false)),
    Variant {
        focal: true,
        ..plain("mlm_focal", mlm(true))
    },
];

impl Variant {
    pub fn by_name(name: &str) -> Result<Variant> {
        ALL.iter().copied().find(|v| v.name == name).ok_or_else(|| {
            let known: Vec<&str> = ALL.iter().map(|v| v.name).collect();
            GleeError::config("variants", format!("unknown variant {name:?}; known: {}", known.join(", ")))
        })
    }

    /// The ten rows compared by the shipped experiment.
    pub fn benchmark_matrix() -> Vec<Variant> {
        ALL.to_vec()
    }
}
