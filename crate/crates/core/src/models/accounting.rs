use super::{MauUnit, Network, UsuUnit};
use crate::nn::ConvLayer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub bytes64: usize,
    pub bytes32: usize,
}

/// Operation counts for one eval-mode forward pass of a single sample.
/// Convolutions count a multiply and an add per tap; pooling, upsampling,
/// averaging and ReLU count one op per output element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopCount {
    pub conv: u64,
    pub other: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.conv + self.other
    }

    pub(crate) fn conv(&mut self, layer: &ConvLayer, h: usize, w: usize) {
        self.conv += conv_flops(layer, h, w);
    }

    pub(crate) fn elementwise(&mut self, channels: usize, h: usize, w: usize) {
        self.other += (channels * h * w) as u64;
    }

    /// Two convs with ReLUs, then max-pool, avg-pool and their average.
    pub(crate) fn mau(&mut self, unit: &MauUnit, h: usize, w: usize) {
        let c = unit.width();
        self.conv(&unit.conv_a, h, w);
        self.conv(&unit.conv_b, h, w);
        self.elementwise(2 * c, h, w);
        self.elementwise(3 * c, h / 2, w / 2);
    }

    /// Upsampling of the coarse stream to `h`×`w`, then two convs with ReLUs.
    pub(crate) fn usu(&mut self, unit: &UsuUnit, coarse_channels: usize, h: usize, w: usize) {
        self.elementwise(coarse_channels, h, w);
        self.conv(&unit.conv_a, h, w);
        self.conv(&unit.conv_b, h, w);
        self.elementwise(2 * unit.width(), h, w);
    }
}

pub fn conv_flops(layer: &ConvLayer, h: usize, w: usize) -> u64 {
    2 * 9 * (layer.in_channels * layer.out_channels * h * w) as u64
}

pub fn count_params<N: Network>(model: &N) -> ParamCount {
    let total = model.layers().iter().map(|(_, l)| l.parameter_count()).sum();
    ParamCount { total, bytes64: total * 8, bytes32: total * 4 }
}

pub fn count_flops<N: Network>(model: &N, h: usize, w: usize) -> FlopCount {
    model.flops(h, w)
}
