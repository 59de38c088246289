use super::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn masked_softmax_examples() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
    let y = t.masked_softmax(x, &[true, false, true]).unwrap();
    assert_eq!(t.value(y), &[0.5, 0.0, 0.5]);

    let z = t.constant(2, 2, vec![3.0, -1e9, 0.0, 0.0]).unwrap();
    let p = t.masked_softmax(z, &[false, false]).unwrap();
    assert_eq!(t.value(p), &[0.0; 4]);
}

#[test]
fn simple_forward_values() {
    let mut t = Tape::<f64>::new();
    let zero = t.constant(1, 1, vec![0.0]).unwrap();
    let th = t.tanh(zero);
    assert_eq!(t.scalar(th), 0.0);

    let row = t.constant(1, 4, vec![2.0; 4]).unwrap();
    let g = t.constant(1, 4, vec![1.0; 4]).unwrap();
    let b = t.constant(1, 4, vec![0.0; 4]).unwrap();
    let ln = t.layer_norm(row, g, b).unwrap();
    assert_eq!(t.value(ln), &[0.0; 4]);

    let eye = t.constant(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let x = t.constant(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let y = t.matmul(eye, x).unwrap();
    assert_eq!(t.value(y), t.value(x));
}

#[test]
fn shape_errors_name_both_shapes() {
    let mut t = Tape::<f32>::new();
    let a = t.constant(2, 3, vec![0.0; 6]).unwrap();
    let b = t.constant(2, 3, vec![0.0; 6]).unwrap();
    let err = t.matmul(a, b).unwrap_err();
    assert!(err.to_string().contains("[2, 3] vs [2, 3]"), "{err}");
    let c = t.constant(3, 2, vec![0.0; 6]).unwrap();
    assert!(matches!(t.add(a, c), Err(AutodiffError::Shape { op: "add", .. })));
    assert!(t.masked_softmax(a, &[true]).is_err());
}

#[test]
fn sum_backward_is_ones() {
    let mut t = Tape::<f64>::new();
    let x = t.input(1, 3, vec![0.3, -1.0, 2.0]).unwrap();
    let s = t.sum(x);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn mean_tanh_backward_at_zero() {
    let mut t = Tape::<f64>::new();
    let x = t.input(1, 4, vec![0.0; 4]).unwrap();
    let th = t.tanh(x);
    let m = t.mean(th);
    let g = t.backward(m).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[0.25; 4]);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut t = Tape::<f64>::new();
    let x = t.input(1, 2, vec![1.0, 2.0]).unwrap();
    assert!(matches!(t.backward(x), Err(AutodiffError::NotScalar(_))));
}

#[test]
fn constants_receive_no_gradient() {
    let mut t = Tape::<f64>::new();
    let x = t.input(1, 2, vec![1.0, 2.0]).unwrap();
    let c = t.constant(1, 2, vec![3.0, 4.0]).unwrap();
    let y = t.mul(x, c).unwrap();
    let s = t.sum(y);
    let g = t.backward(s).unwrap();
    assert_eq!(g.wrt(x).unwrap(), &[3.0, 4.0]);
    assert!(g.wrt(c).is_none());
}

#[test]
fn repeated_backward_accumulates_into_tensors() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
    let grads = {
        let mut t = Tape::new();
        let v = t.param(&store, w);
        let sq = t.mul(v, v).unwrap();
        let s = t.sum(sq);
        let g = t.backward(s).unwrap();
        let mut buf = GradBuffer::zeros_like(&store);
        g.accumulate_params(&mut buf);
        buf
    };
    store.absorb(&grads);
    store.absorb(&grads);
    assert_eq!(store.get(w).grad().unwrap(), &[4.0, -8.0]);
}

#[test]
fn shared_param_leaf_sums_contributions() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("w", Tensor::new(vec![1, 1], vec![3.0]).unwrap());
    let mut t = Tape::new();
    let a = t.param(&store, w);
    let b = t.param(&store, w);
    assert_eq!(a, b);
    let y = t.mul(a, b).unwrap();
    let g = t.backward(y).unwrap();
    let mut buf = GradBuffer::zeros_like(&store);
    g.accumulate_params(&mut buf);
    assert_eq!(buf.get(w), &[6.0]);
}

#[test]
fn log_softmax_matches_log_of_softmax() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(2, 3, vec![0.5, -1.0, 2.0, 1.0, 1.0, -3.0]).unwrap();
    let mask = [true, false, true];
    let p = t.masked_softmax(x, &mask).unwrap();
    let lp = t.masked_log_softmax(x, &mask).unwrap();
    let expect: Vec<f64> = t
        .value(p)
        .iter()
        .enumerate()
        .map(|(i, v)| if mask[i % 3] { v.ln() } else { 0.0 })
        .collect();
    assert!(close(t.value(lp), &expect, 1e-12));
}
