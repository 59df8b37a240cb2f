use super::ParamGroup;

/// Anything that exposes its trainable parameters as one or more groups.
pub trait Parameterized {
    fn param_groups(&self) -> Vec<&ParamGroup>;
    fn param_groups_mut(&mut self) -> Vec<&mut ParamGroup>;
}

impl Parameterized for ParamGroup {
    fn param_groups(&self) -> Vec<&ParamGroup> {
        vec![self]
    }

    fn param_groups_mut(&mut self) -> Vec<&mut ParamGroup> {
        vec![self]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor: gradients smaller than this are compared in absolute terms,
/// where central differences are dominated by round-off.
const REL_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the gradients currently stored in `target` against central
/// differences of `loss` for every scalar parameter.
///
/// The caller must populate the gradient buffers (forward + backward) for the
/// current parameter values before calling. Parameter values are restored
/// exactly afterwards.
pub fn grad_check<T, F>(target: &mut T, eps: f64, mut loss: F) -> GradCheckReport
where
    T: Parameterized,
    F: FnMut(&T) -> f64,
{
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    let shapes: Vec<Vec<usize>> = target
        .param_groups()
        .iter()
        .map(|g| g.params().iter().map(|p| p.value.len()).collect())
        .collect();

    for (gi, sizes) in shapes.iter().enumerate() {
        for (pi, &n) in sizes.iter().enumerate() {
            for idx in 0..n {
                let original = target.param_groups()[gi].params()[pi].value.data()[idx];
                set(target, gi, pi, idx, original + eps);
                let plus = loss(target);
                set(target, gi, pi, idx, original - eps);
                let minus = loss(target);
                set(target, gi, pi, idx, original);

                let numeric = (plus - minus) / (2.0 * eps);
                let param = &target.param_groups()[gi].params()[pi];
                let analytic = param.grad[idx];
                let rel = relative_error(analytic, numeric);
                let abs = (analytic - numeric).abs();
                report.checked += 1;
                report.max_absolute_error = report.max_absolute_error.max(abs);
                if rel > report.max_relative_error || report.worst_param.is_empty() {
                    report.max_relative_error = rel.max(report.max_relative_error);
                    report.worst_param = param.name.clone();
                    report.worst_index = idx;
                }
            }
        }
    }
    report
}

fn set<T: Parameterized>(target: &mut T, gi: usize, pi: usize, idx: usize, value: f64) {
    let mut groups = target.param_groups_mut();
    groups[gi].params_mut()[pi].value.data_mut()[idx] = value;
}
