/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_alpha: (a: number) => number;
export const demo_frame: (a: number) => number;
export const demo_frames: (a: number) => number;
export const demo_height: (a: number) => number;
export const demo_image: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const demo_scenes: () => [number, number];
export const demo_set_alpha: (a: number, b: number) => void;
export const demo_step: (a: number) => [number, number, number];
export const demo_views: () => [number, number];
export const demo_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
