use image::imageops::{self, FilterType};
use image::RgbImage;

use super::OrchestratorError;
use crate::archive::ArchiveView;
use crate::cppn::decode_png;
use crate::metrics::{best_matches, embed_archive_images, farthest_point_sample, MetricContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// The first `n` publications.
    PublicationOrder,
    /// Farthest-point representatives of the image embeddings.
    Representatives,
    /// Images that best match the most nouns, strongest match first.
    TopRecall,
}

impl GridKind {
    pub const ALL: [GridKind; 3] = [GridKind::PublicationOrder, GridKind::Representatives, GridKind::TopRecall];

    pub fn name(self) -> &'static str {
        match self {
            GridKind::PublicationOrder => "publication-order",
            GridKind::Representatives => "representatives",
            GridKind::TopRecall => "top-recall",
        }
    }
}

pub struct GridOutput {
    pub kind: GridKind,
    /// Archive positions in tile order.
    pub positions: Vec<usize>,
    pub image: RgbImage,
}

/// Row-major montage of square tiles on a ⌈√n⌉-column grid; unfilled
/// cells stay black.
pub fn montage(images: &[RgbImage], tile: u32) -> RgbImage {
    let n = images.len().max(1) as u32;
    let cols = (n as f64).sqrt().ceil() as u32;
    let rows = n.div_ceil(cols);
    let mut out = RgbImage::new(cols * tile, rows * tile);
    for (i, img) in images.iter().enumerate() {
        let i = i as u32;
        let tile_img = if img.dimensions() == (tile, tile) {
            img.clone()
        } else {
            imageops::resize(img, tile, tile, FilterType::Triangle)
        };
        imageops::replace(&mut out, &tile_img, ((i % cols) * tile) as i64, ((i / cols) * tile) as i64);
    }
    out
}

/// Chooses up to `n` archive images for `kind` and lays them out.
pub fn grid(
    view: &dyn ArchiveView,
    kind: GridKind,
    n: usize,
    ctx: &MetricContext,
    tile: u32,
) -> Result<GridOutput, OrchestratorError> {
    let n = n.min(view.len());
    let positions = match kind {
        _ if n == 0 => Vec::new(),
        GridKind::PublicationOrder => (0..n).collect(),
        GridKind::Representatives => {
            let points: Vec<Vec<f64>> = embed_archive_images(view, view.len(), ctx.embedder.as_ref(), &ctx.embeddings)?
                .into_iter()
                .map(|e| e.values)
                .collect();
            farthest_point_sample(&points, n, 0)?
        }
        GridKind::TopRecall => {
            let images = embed_archive_images(view, view.len(), ctx.embedder.as_ref(), &ctx.embeddings)?;
            let nouns = ctx.noun_embeddings()?;
            let mut out = Vec::new();
            for (_, image, _) in best_matches(&images, &nouns)? {
                if !out.contains(&image) {
                    out.push(image);
                    if out.len() == n {
                        break;
                    }
                }
            }
            out
        }
    };
    let images = positions
        .iter()
        .map(|&p| Ok(decode_png(&view.image_png(p)?)?))
        .collect::<Result<Vec<_>, OrchestratorError>>()?;
    Ok(GridOutput {
        kind,
        positions,
        image: montage(&images, tile),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn montage_layout() {
        let tiles: Vec<RgbImage> = (0..5u8)
            .map(|i| RgbImage::from_pixel(2, 2, image::Rgb([i * 40, 0, 0])))
            .collect();
        let m = montage(&tiles, 2);
        assert_eq!(m.dimensions(), (6, 4));
        assert_eq!(m.get_pixel(0, 0)[0], 0);
        assert_eq!(m.get_pixel(4, 0)[0], 80);
        assert_eq!(m.get_pixel(2, 2)[0], 160);
        assert_eq!(m.get_pixel(4, 2)[0], 0);
    }
}
