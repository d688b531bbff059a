use super::image::{
    crop_mask, crop_raster, resize_bicubic, resize_mask_nearest, to_grayscale, CropSpec, Gray,
    Mask, Raster,
};
use super::io::{read_mask, read_raster};
use super::manifest::ImageRecord;
use super::DatasetError;
use crate::scalar::Scalar;

/// Preprocessed image/mask pair at model resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct SegSample<T> {
    pub image: Gray<T>,
    pub mask: Mask,
    pub record: Option<ImageRecord>,
}

impl<T: Scalar> SegSample<T> {
    /// Checks the pair invariants (same dimensions, binary mask, unit range).
    pub fn new(image: Gray<T>, mask: Mask, record: Option<ImageRecord>) -> Result<Self, DatasetError> {
        if image.dims() != mask.dims() {
            return Err(DatasetError::Shape(format!(
                "image {:?} vs mask {:?}",
                image.dims(),
                mask.dims()
            )));
        }
        if let Some(v) = mask.data.iter().find(|&&v| v > 1) {
            return Err(DatasetError::NonBinaryMask(*v));
        }
        if image.data.iter().any(|v| !(T::zero()..=T::one()).contains(v)) {
            return Err(DatasetError::Shape("intensity outside [0, 1]".into()));
        }
        Ok(Self {
            image,
            mask,
            record,
        })
    }
}

/// Crop, grayscale and resize already-decoded inputs.
pub fn preprocess_arrays<T: Scalar>(
    raster: &Raster<T>,
    mask: &Mask,
    crop: &CropSpec,
    target: (usize, usize),
) -> Result<(Gray<T>, Mask), DatasetError> {
    let cropped = crop_raster(raster, crop)?;
    let gray = to_grayscale(&cropped);
    let image = resize_bicubic(&gray, target.0, target.1)?;
    let mask = resize_mask_nearest(&crop_mask(mask, crop)?, target.0, target.1)?;
    Ok((image, mask))
}

/// Loads one record from disk and runs the preprocessing chain.
pub fn preprocess_sample<T: Scalar>(
    record: &ImageRecord,
    target: (usize, usize),
) -> Result<SegSample<T>, DatasetError> {
    let raster = read_raster::<T>(&record.image_path)?;
    let mask = read_mask(&record.mask_path)?;
    let (image, mask) = preprocess_arrays(&raster, &mask, &record.crop_spec(), target)?;
    SegSample::new(image, mask, Some(record.clone()))
}
