/// Read/write access to every scalar parameter of a module.
///
/// Implementors visit their tensors in a fixed order; parameter counting and
/// zero-initialization are derived from the visitors.
pub trait Params {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32]));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    fn zero_params(&mut self) {
        self.visit_params_mut(&mut |p| p.fill(0.0));
    }

    fn scale_params(&mut self, factor: f32) {
        self.visit_params_mut(&mut |p| p.iter_mut().for_each(|v| *v *= factor));
    }
}

impl<T: Params + ?Sized> Params for Box<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        (**self).visit_params(f)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        (**self).visit_params_mut(f)
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.iter().for_each(|m| m.visit_params(f))
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.iter_mut().for_each(|m| m.visit_params_mut(f))
    }
}

impl<T: Params> Params for Option<T> {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        if let Some(m) = self {
            m.visit_params(f)
        }
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        if let Some(m) = self {
            m.visit_params_mut(f)
        }
    }
}

impl<A: Params, B: Params> Params for (A, B) {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        self.0.visit_params(f);
        self.1.visit_params(f);
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        self.0.visit_params_mut(f);
        self.1.visit_params_mut(f);
    }
}

/// One-line `Params` impls for structs whose parameters are plain fields.
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::params::Params for $ty {
            fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
                $( $crate::params::Params::visit_params(&self.$field, f); )*
            }
            fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
                $( $crate::params::Params::visit_params_mut(&mut self.$field, f); )*
            }
        }
    };
}
pub(crate) use impl_params;

/// Raw parameter vectors.
impl Params for Vec<f32> {
    fn visit_params(&self, f: &mut dyn FnMut(&[f32])) {
        f(self)
    }
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        f(self)
    }
}
