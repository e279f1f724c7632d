use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a patch-based transformer classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads_per_block: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub latent_dim: usize,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ViTConfig {
    /// 32x32 images in 4x4 patches, 4 blocks of 2 heads, width 64.
    pub fn desk() -> Self {
        ViTConfig {
            image_size: 32,
            patch_size: 4,
            channels: 3,
            embed_dim: 64,
            depth: 4,
            heads_per_block: 2,
            mlp_ratio: 4,
            num_classes: 10,
            latent_dim: 32,
        }
    }

    /// ViT-Tiny backbone: 224px, patch 16, width 192, 12 blocks of 3 heads.
    pub fn vit_tiny() -> Self {
        ViTConfig {
            image_size: 224,
            patch_size: 16,
            channels: 3,
            embed_dim: 192,
            depth: 12,
            heads_per_block: 3,
            mlp_ratio: 4,
            num_classes: 100,
            latent_dim: 64,
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "vit-tiny" => Ok(Self::vit_tiny()),
            other => Err(Error::Config(format!("unknown model preset '{other}' (desk | vit-tiny)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("heads_per_block", self.heads_per_block),
            ("mlp_ratio", self.mlp_ratio),
            ("num_classes", self.num_classes),
            ("latent_dim", self.latent_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.embed_dim % self.heads_per_block != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by heads_per_block {}",
                self.embed_dim, self.heads_per_block
            )));
        }
        Ok(())
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid_side() * self.grid_side()
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads_per_block
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    pub fn total_heads(&self) -> usize {
        self.depth * self.heads_per_block
    }
}
