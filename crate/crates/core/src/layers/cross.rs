use super::mamba::UniMambaBlock;
use crate::error::{Error, Result};
use crate::seqcore::FeatureSequence;

/// Run `block` over `cat(k, q)` and keep the last `q.len()` outputs.
pub fn cross_mamba(block: &UniMambaBlock, k: &FeatureSequence, q: &FeatureSequence) -> Result<FeatureSequence> {
    cross_mamba_multi(block, &[k, q])
}

/// Run `block` over the concatenation of all inputs and keep as many trailing
/// outputs as the last input has tokens.
pub fn cross_mamba_multi(block: &UniMambaBlock, xs: &[&FeatureSequence]) -> Result<FeatureSequence> {
    let last = xs.last().ok_or_else(|| Error::Usage("cross_mamba needs at least one input".into()))?;
    for x in xs {
        x.check_dim(block.dim())?;
    }
    let cat = FeatureSequence::concat(xs)?;
    let total = cat.len();
    let y = block.forward(&cat)?;
    Ok(y.slice_rows(total - last.len()..total))
}
