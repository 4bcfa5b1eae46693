//! Training loop: full-batch Adam on the combined objective with
//! early stopping and validation-based snapshot selection.

use log::debug;

use crate::error::{CoreError, Result};
use crate::gae::encoder::{
    backward_on_batch, forward, loss_on_batch, EdgeBatch, SparseAdjacency,
};
use crate::gae::{standardize_features, EpochStats, GaeConfig, QuantileModel, TrainingHistory};
use crate::graph::{build_masked_weights, EdgeSplit, Graph};
use crate::numerics::Adam;

/// Train a quantile model on the split's training edges, selecting the
/// parameter snapshot with the lowest combined loss on the validation
/// edges. Deterministic for a fixed config seed.
pub fn train(g: &Graph, split: &EdgeSplit, config: &GaeConfig) -> Result<QuantileModel> {
    config.validate()?;
    split.validate(g.n_edges())?;

    let masked = build_masked_weights(g, split, config.fill)?;
    let adj = SparseAdjacency::new(g, &masked);
    let x_std = standardize_features(g.node_features());
    let train_batch = EdgeBatch::gather(g, &split.train)?;
    let val_batch = EdgeBatch::gather(g, &split.val)?;

    let mut model = QuantileModel::init(config.clone(), g.node_features().cols())?;
    let mut params = model.params().clone();
    let mut adam = Adam::new(&params, config.learning_rate, config.beta1, config.beta2, config.adam_eps);

    let mut history = TrainingHistory {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best_params = params.clone();
    let mut epochs_since_best = 0usize;

    for epoch in 0..config.max_epochs {
        let fwd = forward(&adj, &x_std, &params)?;
        let train_loss = loss_on_batch(&fwd, &train_batch, config.alpha)?;
        let val_loss = loss_on_batch(&fwd, &val_batch, config.alpha)?;
        if !train_loss.total.is_finite() || !val_loss.total.is_finite() {
            return Err(CoreError::Training(format!(
                "loss diverged at epoch {epoch}; try a lower learning rate"
            )));
        }
        history.epochs.push(EpochStats {
            epoch,
            train_loss: train_loss.total,
            val_loss: val_loss.total,
        });
        if val_loss.total < history.best_val_loss {
            history.best_val_loss = val_loss.total;
            history.best_epoch = epoch;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best > config.patience {
                debug!(
                    "early stop at epoch {epoch} (best val {:.6} @ {})",
                    history.best_val_loss, history.best_epoch
                );
                break;
            }
        }
        if epoch % 100 == 0 {
            debug!(
                "epoch {epoch}: train {:.6} val {:.6}",
                train_loss.total, val_loss.total
            );
        }

        backward_on_batch(&adj, &fwd, &train_batch, &mut params, config.alpha)?;
        adam.step(&mut params)?;
    }

    model.set_trained(best_params, history);
    Ok(model)
}
