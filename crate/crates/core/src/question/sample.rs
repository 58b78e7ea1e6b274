//! Random well-formed parameters for a task, drawn from the grounded pools.

use rand::seq::SliceRandom;
use rand::Rng;

use super::sanitize::PoolView;
use super::{empty_params, image, list, text, Params, RegionOntology};
use crate::tasks::{PoolKind, RoleKind, TaskType};

/// Fills every role of `task` with distinct pool members. `None` when the
/// pools cannot supply a complete assignment.
pub fn sample_params<R: Rng + ?Sized>(
    task: TaskType,
    view: &PoolView<'_>,
    ontology: &RegionOntology,
    rng: &mut R,
) -> Option<Params> {
    let mut order = [1u8, 2u8];
    order.shuffle(rng);
    // The swapped image order is tried when the first cannot be filled.
    sample_with_images(task, view, ontology, order, rng)
        .or_else(|| sample_with_images(task, view, ontology, [order[1], order[0]], rng))
}

fn sample_with_images<R: Rng + ?Sized>(
    task: TaskType,
    view: &PoolView<'_>,
    ontology: &RegionOntology,
    order: [u8; 2],
    rng: &mut R,
) -> Option<Params> {
    let mut params = empty_params(task);
    let schema = task.schema();
    // Images first: reference-frame pools depend on them.
    let images = schema.roles.iter().filter(|r| matches!(r.kind, RoleKind::Image));
    for (spec, idx) in images.zip(order) {
        params.insert(spec.role, image(idx));
    }
    let mut used: Vec<String> = Vec::new();
    for spec in schema.roles {
        match spec.kind {
            RoleKind::Image => {}
            RoleKind::Label(pool) => {
                let label = pick(view, pool, &params, &used, 1, rng)?.pop()?;
                used.push(label.clone());
                params.insert(spec.role, text(&label));
            }
            RoleKind::LabelList { pool, min, max } => {
                let n = rng.gen_range(min..=max);
                let items = pick(view, pool, &params, &used, n, rng)?;
                used.extend(items.iter().cloned());
                params.insert(spec.role, list(&items));
            }
            RoleKind::Region => {
                let anchors = view.label_set(PoolKind::RegionAnchor, &params)?;
                let phrase = *ontology.resolvable_phrases(&anchors).choose(rng)?;
                params.insert(spec.role, text(phrase));
            }
        }
    }
    Some(params)
}

fn pick<R: Rng + ?Sized>(
    view: &PoolView<'_>,
    pool: PoolKind,
    params: &Params,
    used: &[String],
    n: usize,
    rng: &mut R,
) -> Option<Vec<String>> {
    // Vocabulary-only labels are legal counting targets but always count
    // zero, so draws come from instantiated labels.
    let set = match pool {
        PoolKind::Countable => view.scene.instances().iter().map(|i| i.label.clone()).collect(),
        _ => view.label_set(pool, params)?,
    };
    let free: Vec<&String> = set.iter().filter(|l| !used.contains(l)).collect();
    if free.len() < n {
        return None;
    }
    Some(free.choose_multiple(rng, n).map(|s| s.to_string()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_grounded_pools, generate_synthetic_scene, GeneratorSpec, MIN_VISIBILITY};
    use crate::tasks::{ContextRef, Modality};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_fill_every_role_with_distinct_labels() {
        let scene = generate_synthetic_scene(&GeneratorSpec::default(), 11).unwrap();
        let pools = build_grounded_pools(&scene, MIN_VISIBILITY);
        let ontology = RegionOntology::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let id = scene.scene_id.clone();
        let frames: Vec<u32> = scene.frames().iter().map(|f| f.frame_id).collect();
        for task in TaskType::ALL {
            let ctx = match task.modality() {
                Modality::Scene => ContextRef::scene(&id),
                Modality::SingleImage => ContextRef::single(&id, frames[0]),
                Modality::ImagePair => ContextRef::pair(&id, frames[0], frames[1]),
            };
            let view = PoolView::new(&scene, &pools, &ctx);
            if let Some(p) = sample_params(task, &view, &ontology, &mut rng) {
                assert!(p.values().all(|v| v.is_some()), "{task}: {p:?}");
                let labels: Vec<&str> = p.values().flatten().filter_map(|v| v.as_text()).collect();
                let mut dedup = labels.clone();
                dedup.sort();
                dedup.dedup();
                if task != TaskType::CamRegionPosition {
                    assert_eq!(dedup.len(), labels.len(), "{task}");
                }
            }
        }
    }
}
