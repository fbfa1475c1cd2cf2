/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_attackreport_free: (a: number, b: number) => void;
export const __wbg_get_attackreport_adversarial_fs: (a: number) => number;
export const __wbg_get_attackreport_adversarial_prediction: (a: number) => number;
export const __wbg_get_attackreport_background_norm: (a: number) => number;
export const __wbg_get_attackreport_clean_fs: (a: number) => number;
export const __wbg_get_attackreport_clean_prediction: (a: number) => number;
export const __wbg_get_attackreport_foreground_norm: (a: number) => number;
export const __wbg_get_attackreport_label: (a: number) => number;
export const __wbg_lab_free: (a: number, b: number) => void;
export const __wbg_set_attackreport_adversarial_fs: (a: number, b: number) => void;
export const __wbg_set_attackreport_adversarial_prediction: (a: number, b: number) => void;
export const __wbg_set_attackreport_background_norm: (a: number, b: number) => void;
export const __wbg_set_attackreport_clean_fs: (a: number, b: number) => void;
export const __wbg_set_attackreport_clean_prediction: (a: number, b: number) => void;
export const __wbg_set_attackreport_foreground_norm: (a: number, b: number) => void;
export const __wbg_set_attackreport_label: (a: number, b: number) => void;
export const lab_adversarial_rgba: (a: number) => [number, number];
export const lab_attack: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const lab_class_name: (a: number, b: number) => [number, number];
export const lab_epochs_done: (a: number) => number;
export const lab_image_rgba: (a: number) => [number, number];
export const lab_label: (a: number) => number;
export const lab_mask_iou: (a: number) => [number, number, number];
export const lab_masks_rgba: (a: number) => [number, number, number, number];
export const lab_new: (a: number, b: number) => [number, number, number];
export const lab_perturbation_rgba: (a: number) => [number, number, number, number];
export const lab_predict: (a: number) => [number, number, number];
export const lab_salience_rgba: (a: number) => [number, number, number, number];
export const lab_select: (a: number, b: number) => void;
export const lab_selected: (a: number) => number;
export const lab_size: (a: number) => number;
export const lab_test_accuracy: (a: number) => [number, number, number];
export const lab_test_len: (a: number) => number;
export const lab_train_batches: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
