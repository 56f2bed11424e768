use proptest::prelude::*;

use evacnet::numcore::{finite_diff_check, Tape, Tensor, Var};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-1.5f64..1.5, rows * cols).prop_map(move |v| Tensor::new(vec![rows, cols], v).unwrap())
}

fn case() -> impl Strategy<Value = (Tensor, Tensor, Tensor, Tensor, usize)> {
    (1usize..5, 1usize..5, 2usize..5).prop_flat_map(|(n, k, m)| {
        (matrix(n, k), matrix(k, m), matrix(1, m), matrix(n, 1), 0usize..3)
    })
}

/// Affine map, an activation picked by `act`, then shape and reduction ops.
fn composite(tape: &mut Tape, v: &[Var], act: usize) -> Result<Var, evacnet::numcore::NumError> {
    let (x, w, b, c) = (v[0], v[1], v[2], v[3]);
    let z = tape.matmul(x, w)?;
    let z = tape.add_row(z, b)?;
    let a = match act {
        0 => tape.sigmoid(z)?,
        1 => tape.tanh(z)?,
        _ => tape.softmax(z, 1)?,
    };
    let g = tape.mul_col(a, c)?;
    let sq = tape.mul(g, g)?;
    let first = tape.slice_cols(sq, 0, 1)?;
    let wide = tape.concat_cols(&[sq, first])?;
    let t = tape.transpose(wide)?;
    let back = tape.transpose(t)?;
    let s = tape.scale(back, 0.7)?;
    let d = tape.sub(s, wide)?;
    tape.mean(d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_gradients_match_finite_differences((x, w, b, c, act) in case()) {
        let err = finite_diff_check(|tape, v| composite(tape, v, act), &[x, w, b, c], 1e-6).unwrap();
        prop_assert!(err < 1e-5, "max rel err {err}");
    }

    #[test]
    fn row_selection_and_gather((x, w, b, _c, _act) in case(), pick in prop::collection::vec(0usize..64, 1..6)) {
        let n = x.rows();
        let m = w.cols();
        let rows: Vec<usize> = pick.iter().map(|p| p % n).collect();
        let cols: Vec<usize> = (0..rows.len()).map(|k| pick[k] % m).collect();
        let err = finite_diff_check(
            |tape, v| {
                let z = tape.matmul(v[0], v[1])?;
                let z = tape.add_row(z, v[2])?;
                let z = tape.tanh(z)?;
                let s = tape.select_rows(z, &rows)?;
                let stacked = tape.concat_rows(&[s, z])?;
                let top = tape.slice_cols(stacked, 0, m)?;
                let sel = tape.select_rows(top, &(0..rows.len()).collect::<Vec<_>>())?;
                let gathered = tape.gather(sel, &cols)?;
                let total = tape.sum(gathered)?;
                let all = tape.mean(stacked)?;
                tape.add(total, all)
            },
            &[x, w, b],
            1e-6,
        )
        .unwrap();
        prop_assert!(err < 1e-5, "max rel err {err}");
    }
}
